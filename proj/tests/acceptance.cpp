// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.

#include "avbai/harness.hpp"
#include "avbai/selftest.hpp"

#include <gtest/gtest.h>

#include <iostream>

using namespace avbai;

namespace {

class CriterionPrinter : public ::testing::EmptyTestEventListener {
    void OnTestEnd(const ::testing::TestInfo& info) override {
        std::cout << (info.result()->Passed() ? "PASS " : "FAIL ") << info.name() << std::endl;
    }
};

void expect_check(const checks::CheckResult& r) {
    std::cout << "  " << r.name << ": " << r.detail << std::endl;
    EXPECT_TRUE(r.passed) << r.detail;
}

ExperimentSummary default_run(const std::string& preset) {
    ExperimentConfig cfg;
    cfg.preset = preset;
    cfg.instance = make_preset(preset);
    cfg.variants = {PolicyMode::contextual, PolicyMode::noncontext};
    cfg.replications = 100;
    cfg.record_timing = false;
    return run_experiment(cfg, false);
}

void report(const ExperimentSummary& s) {
    for (const auto& v : s.variants)
        std::cout << "  " << to_string(v.variant) << ": mean tau " << format_real(v.mean_tau) << " (se "
                  << format_real(v.se_tau) << "), error rate " << format_real(v.error_rate) << ", cap hits "
                  << v.cap_hits << std::endl;
}

}  // namespace

TEST(Acceptance, C01_ErrorControlBernoulliMu1) {
    const ExperimentSummary s = default_run("mu1-bernoulli");
    report(s);
    for (const auto& v : s.variants) {
        EXPECT_EQ(v.reps, 100u);
        EXPECT_LE(v.error_rate, 0.10) << to_string(v.variant);
        EXPECT_LE(v.cap_hits, 5u) << to_string(v.variant);
    }
}

TEST(Acceptance, C02_GroundTruthMeans) { expect_check(checks::preset_means(0.005)); }

TEST(Acceptance, C03_KlProjectionIdentity) { expect_check(checks::kl_identity(50, 11, 1e-6)); }

TEST(Acceptance, C04_SolverVersusGrid) { expect_check(checks::solver_vs_grid(100, 12, 1e-3, 10.0)); }

TEST(Acceptance, C05_GradientCheck) { expect_check(checks::gradient_vs_fd(100, 13, 1e-5)); }

TEST(Acceptance, C06_TwoArmedConsistency) { expect_check(checks::two_armed()); }

TEST(Acceptance, C07_BoundaryValues) { expect_check(checks::boundary_values()); }

TEST(Acceptance, C08_ContextualBeatsNoncontextualBetaMu1) {
    const ExperimentSummary s = default_run("mu1-beta");
    report(s);
    const ComparisonReport rep = compare_variants(s.variants);
    for (const auto& r : rep.ratios)
        std::cout << "  " << to_string(r.numerator) << "/" << to_string(r.denominator) << " mean tau ratio "
                  << format_real(r.ratio) << " (se " << format_real(r.standard_error) << ")" << std::endl;
    ASSERT_TRUE(rep.contextual_below_noncontext.has_value());
    EXPECT_TRUE(*rep.contextual_below_noncontext);
    for (const auto& v : s.variants) EXPECT_LE(v.error_rate, 0.1) << to_string(v.variant);
}

TEST(Acceptance, C09_PsgdVersusThetaGrid) { expect_check(checks::psgd_vs_grid(500, 0.01, 1e-2)); }

TEST(Acceptance, C10_IncrementalVersusBatchStats) { expect_check(checks::stats_vs_batch(100, 16, 1e-10)); }

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    ::testing::UnitTest::GetInstance()->listeners().Append(new CriterionPrinter);
    return RUN_ALL_TESTS();
}
