#pragma once

// Replicated experiments: presets, a worker pool over replications, CSV
// emission and variant comparison.

#include "avbai/bai.hpp"
#include "avbai/env.hpp"
#include "avbai/policy.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace avbai {

inline const std::vector<double>& preset_constants(const std::string& which) {
    static const std::vector<double> c1{0.0, -0.28, -0.39, -0.57};
    static const std::vector<double> c2{-1.17, -1.80, -1.88, -1.96, -2.05};
    if (which == "mu1") return c1;
    if (which == "mu2") return c2;
    throw std::invalid_argument("unknown mean vector '" + which + "'");
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"mu1-bernoulli", "mu1-beta", "mu2-bernoulli", "mu2-beta"};
    return names;
}

inline BanditInstance make_preset(const std::string& name) {
    const auto dash = name.find('-');
    if (dash == std::string::npos) throw std::invalid_argument("unknown preset '" + name + "'");
    const std::string means = name.substr(0, dash);
    const std::string family = name.substr(dash + 1);
    if ((means != "mu1" && means != "mu2") || (family != "bernoulli" && family != "beta"))
        throw std::invalid_argument("unknown preset '" + name + "'");
    return make_instance(parse_family(family), preset_constants(means), 4);
}

struct ExperimentConfig {
    std::string preset = "mu1-bernoulli";
    BanditInstance instance = make_preset("mu1-bernoulli");
    RunConfig run;
    std::vector<PolicyMode> variants{PolicyMode::contextual, PolicyMode::noncontext};
    std::size_t replications = 100;
    std::uint64_t base_seed = 1;
    std::string output_dir = "out";
    unsigned threads = 0;  // 0: hardware concurrency
    bool record_timing = true;

    void validate() const {
        instance.validate();
        run.validate();
        if (replications < 1) throw std::invalid_argument("replications must be >= 1");
        if (variants.empty()) throw std::invalid_argument("need at least one variant");
    }
};

struct RunRecord {
    PolicyMode variant = PolicyMode::contextual;
    std::size_t rep = 0;
    std::uint64_t seed = 0;
    std::size_t recommended = 0;
    bool correct = false;
    std::size_t tau = 0;
    bool hit_cap = false;
    bool tie_broken = false;
    double wall_ms = 0.0;
};

struct VariantSummary {
    PolicyMode variant = PolicyMode::contextual;
    std::size_t reps = 0;
    double mean_tau = 0.0;
    double std_tau = 0.0;
    double se_tau = 0.0;
    double error_rate = 0.0;
    std::size_t errors = 0;
    std::size_t cap_hits = 0;
    std::size_t tie_breaks = 0;
    double wall_ms = 0.0;
};

struct ExperimentSummary {
    std::vector<RunRecord> runs;  // variant-major, replication order
    std::vector<VariantSummary> variants;
};

// Aggregates from exact integer sums, so the result does not depend on the
// order in which replications finished.
inline VariantSummary summarise(PolicyMode variant, const std::vector<RunRecord>& runs) {
    VariantSummary s;
    s.variant = variant;
    unsigned __int128 sum = 0, sumsq = 0;
    for (const auto& r : runs) {
        if (r.variant != variant) continue;
        ++s.reps;
        sum += r.tau;
        sumsq += static_cast<unsigned __int128>(r.tau) * r.tau;
        s.errors += r.correct ? 0 : 1;
        s.cap_hits += r.hit_cap ? 1 : 0;
        s.tie_breaks += r.tie_broken ? 1 : 0;
    }
    if (s.reps == 0) return s;
    // wall-clock summed in replication order
    for (const auto& r : runs)
        if (r.variant == variant) s.wall_ms += r.wall_ms;
    const auto n = static_cast<unsigned __int128>(s.reps);
    s.mean_tau = static_cast<double>(sum) / static_cast<double>(s.reps);
    if (s.reps > 1) {
        const unsigned __int128 num = n * sumsq - sum * sum;  // n^2 times the population variance, exact
        const double var = static_cast<double>(num) / static_cast<double>(n * (n - 1));
        s.std_tau = std::sqrt(var);
        s.se_tau = s.std_tau / std::sqrt(static_cast<double>(s.reps));
    }
    s.error_rate = static_cast<double>(s.errors) / static_cast<double>(s.reps);
    return s;
}

inline std::string format_real(double x) {
    std::ostringstream os;
    os << std::setprecision(10) << x;
    return os.str();
}

inline void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
    out << "variant,rep,seed,recommended,correct,tau,hit_cap,tie_broken,wall_ms\n";
    for (const auto& r : runs)
        out << to_string(r.variant) << ',' << r.rep << ',' << r.seed << ',' << r.recommended << ','
            << (r.correct ? 1 : 0) << ',' << r.tau << ',' << (r.hit_cap ? 1 : 0) << ',' << (r.tie_broken ? 1 : 0)
            << ',' << format_real(r.wall_ms) << '\n';
}

inline void write_summary_csv(std::ostream& out, const std::vector<VariantSummary>& rows) {
    out << "variant,reps,mean_tau,std_tau,se_tau,error_rate,errors,cap_hits,tie_breaks,wall_ms\n";
    for (const auto& s : rows)
        out << to_string(s.variant) << ',' << s.reps << ',' << format_real(s.mean_tau) << ','
            << format_real(s.std_tau) << ',' << format_real(s.se_tau) << ',' << format_real(s.error_rate) << ','
            << s.errors << ',' << s.cap_hits << ',' << s.tie_breaks << ',' << format_real(s.wall_ms) << '\n';
}

// Write to a sibling temp file, then rename over the target.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        f << content;
        f.flush();
        if (!f) throw std::runtime_error("write to " + tmp.string() + " failed");
    }
    std::filesystem::rename(tmp, path);
}

// Fails fast when the output directory cannot be created or written.
inline void ensure_writable(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    const auto probe = dir / ".write-probe";
    {
        std::ofstream f(probe);
        if (!f) throw std::runtime_error("output directory " + dir.string() + " is not writable");
    }
    std::filesystem::remove(probe, ec);
}

inline RunRecord run_replication(const ExperimentConfig& cfg, PolicyMode variant, std::size_t rep) {
    RunConfig rc = cfg.run;
    rc.policy.mode = variant;
    rc.trajectory = nullptr;
    RunRecord rec;
    rec.variant = variant;
    rec.rep = rep;
    rec.seed = cfg.base_seed + rep;
    std::mt19937_64 rng(rec.seed);
    const auto start = std::chrono::steady_clock::now();
    const BaiResult res = run_bai(cfg.instance, rc, rng);
    const auto stop = std::chrono::steady_clock::now();
    rec.recommended = res.recommended;
    rec.correct = res.correct;
    rec.tau = res.tau;
    rec.hit_cap = res.hit_cap;
    rec.tie_broken = res.tie_broken;
    if (cfg.record_timing)
        rec.wall_ms = std::round(std::chrono::duration<double, std::milli>(stop - start).count() * 1000.0) / 1000.0;
    return rec;
}

// Runs every (variant, replication) pair over a worker pool. Without an
// output directory nothing is written.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg, bool write_files = true,
                                        std::ostream* progress = nullptr) {
    cfg.validate();
    const std::filesystem::path dir(cfg.output_dir);
    if (write_files) ensure_writable(dir);

    const std::size_t total = cfg.variants.size() * cfg.replications;
    ExperimentSummary out;
    out.runs.resize(total);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::exception_ptr failure;
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= total) return;
            try {
                out.runs[i] = run_replication(cfg, cfg.variants[i / cfg.replications], i % cfg.replications);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure = std::current_exception();
                next = total;
                return;
            }
            const std::size_t n = ++done;
            if (progress) {
                std::lock_guard<std::mutex> lock(mu);
                *progress << "\r" << n << "/" << total << " runs" << std::flush;
            }
        }
    };
    unsigned nthreads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, total));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < nthreads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (progress) *progress << '\n';
    if (failure) std::rethrow_exception(failure);

    for (PolicyMode v : cfg.variants) out.variants.push_back(summarise(v, out.runs));
    if (write_files) {
        std::ostringstream runs, summary;
        write_runs_csv(runs, out.runs);
        write_summary_csv(summary, out.variants);
        write_atomically(dir / "runs.csv", runs.str());
        write_atomically(dir / "summary.csv", summary.str());
    }
    return out;
}

struct VariantRatio {
    PolicyMode numerator;
    PolicyMode denominator;
    double ratio = 0.0;
    double standard_error = 0.0;
};

struct ComparisonReport {
    std::vector<VariantRatio> ratios;
    // Each flag is set only when both variants are present.
    std::optional<bool> contextual_below_noncontext;
    std::optional<bool> noncontext_below_uniform;
};

// Mean-tau ratios for every pair, delta-method standard errors treating the
// two means as independent.
inline ComparisonReport compare_variants(const std::vector<VariantSummary>& rows) {
    if (rows.size() < 2) throw std::invalid_argument("compare_variants needs at least two variants");
    ComparisonReport rep;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            const auto& a = rows[i];
            const auto& b = rows[j];
            VariantRatio r{a.variant, b.variant};
            r.ratio = a.mean_tau / b.mean_tau;
            const double ra = a.mean_tau > 0 ? a.se_tau / a.mean_tau : 0.0;
            const double rb = b.mean_tau > 0 ? b.se_tau / b.mean_tau : 0.0;
            r.standard_error = std::abs(r.ratio) * std::sqrt(ra * ra + rb * rb);
            rep.ratios.push_back(r);
        }
    }
    auto find = [&](PolicyMode m) -> const VariantSummary* {
        for (const auto& s : rows)
            if (s.variant == m) return &s;
        return nullptr;
    };
    const auto* c = find(PolicyMode::contextual);
    const auto* n = find(PolicyMode::noncontext);
    const auto* u = find(PolicyMode::uniform);
    if (c && n) rep.contextual_below_noncontext = c->mean_tau < n->mean_tau;
    if (n && u) rep.noncontext_below_uniform = n->mean_tau < u->mean_tau;
    return rep;
}

inline void print_comparison(std::ostream& out, const ComparisonReport& rep) {
    out << "ratio,mean_tau_ratio,se\n";
    for (const auto& r : rep.ratios)
        out << to_string(r.numerator) << '/' << to_string(r.denominator) << ',' << format_real(r.ratio) << ','
            << format_real(r.standard_error) << '\n';
    auto flag = [](const std::optional<bool>& f) { return f ? (*f ? "yes" : "no") : "n/a"; };
    out << "contextual < noncontext: " << flag(rep.contextual_below_noncontext) << '\n';
    out << "noncontext < uniform: " << flag(rep.noncontext_below_uniform) << '\n';
}

}  // namespace avbai
