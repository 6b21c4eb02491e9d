// Command-line front end: run | oracle | selftest.

#include "avbai/harness.hpp"
#include "avbai/selftest.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Flat `key = value` lines, `#` comments. Each entry becomes `--key=value`.
std::vector<std::string> config_file_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path);
    std::vector<std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
        out.push_back("--" + key + "=" + value);
    }
    return out;
}

// Splices config-file entries in right after the subcommand so that later
// command-line flags take precedence.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::string path;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (path.empty() || rest.size() < 2) return rest;
    std::vector<std::string> out{rest[0], rest[1]};
    for (auto& a : config_file_args(path)) out.push_back(std::move(a));
    out.insert(out.end(), rest.begin() + 2, rest.end());
    return out;
}

std::vector<avbai::PolicyMode> parse_variants(const std::string& list) {
    std::vector<avbai::PolicyMode> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty()) out.push_back(avbai::parse_mode(trim(item)));
    return out;
}

avbai::SnrMethod parse_solver(const std::string& s) {
    if (s == "dinkelbach") return avbai::SnrMethod::dinkelbach;
    if (s == "active-set") return avbai::SnrMethod::active_set;
    throw std::invalid_argument("unknown SNR solver '" + s + "'");
}

double parse_rho(const std::string& s, double alpha) {
    if (s.rfind("auto:", 0) == 0) return avbai::select_rho(alpha, std::stod(s.substr(5)));
    return std::stod(s);
}

void print_vector(std::ostream& out, const char* label, const avbai::ArmVector& v) {
    out << label;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? "," : " ") << avbai::format_real(v[i]);
    out << '\n';
}

// Unconditional variances Var(Y | A = a) = E[v(X, a)] + Var(g(X, a)).
avbai::ArmVector arm_variances(const avbai::BanditInstance& inst, std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto k = static_cast<Eigen::Index>(inst.num_arms);
    avbai::ArmVector ev = avbai::ArmVector::Zero(k), eg = avbai::ArmVector::Zero(k), eg2 = avbai::ArmVector::Zero(k);
    for (std::size_t i = 0; i < draws; ++i) {
        const avbai::Context x = avbai::sample_context(inst, rng);
        for (Eigen::Index a = 0; a < k; ++a) {
            const double g = avbai::true_conditional_mean(inst, x, static_cast<std::size_t>(a));
            ev[a] += avbai::true_conditional_variance(inst, x, static_cast<std::size_t>(a));
            eg[a] += g;
            eg2[a] += g * g;
        }
    }
    const double n = static_cast<double>(draws);
    return ev / n + eg2 / n - (eg / n).cwiseAbs2();
}

int cmd_oracle(const std::string& preset, double alpha, std::size_t draws, int iterations, std::uint64_t seed,
               double floor, double cap) {
    using namespace avbai;
    const BanditInstance inst = make_preset(preset);
    const ArmVector mu = true_arm_means(inst);
    const ArmVector s2 = arm_variances(inst, draws, seed);
    std::cout << "preset " << preset << '\n';
    print_vector(std::cout, "mu", mu);
    print_vector(std::cout, "sigma2", s2);

    const Gamma2Result g2 = gamma2(mu, s2);
    std::cout << "gamma2 " << format_real(g2.value) << '\n';
    print_vector(std::cout, "gamma2_allocation", g2.allocation);
    std::cout << "gamma2_bound " << format_real(g2.value * std::log(1.0 / alpha)) << '\n';

    PolicyConfig cfg;
    cfg.variance_floor = floor;
    cfg.variance_cap = cap;
    auto gamma1_for = [&](const PolicyInputs& in, const char* label) {
        const PsgdResult res = psgd(in, cfg, zero_theta(inst.num_arms), iterations);
        const Gamma1Result g1 = gamma1(in.mu, policy_denominator(in, res.theta));
        std::cout << label << "_gamma1 " << format_real(g1.value) << '\n';
        std::cout << label << "_gamma1_bound " << format_real(g1.bound(alpha)) << '\n';
        print_vector(std::cout, (std::string(label) + "_theta").c_str(), res.theta);
    };
    gamma1_for(population_inputs(inst, floor, cap, draws, seed + 1), "contextual");

    // Without contexts the learner sees per-arm variances and no prediction spread.
    PolicyInputs flat;
    flat.mu = mu;
    const ArmVector root = s2.cwiseMax(floor).cwiseMin(cap).cwiseSqrt();
    flat.vgeo = root * root.transpose();
    flat.centred_pred = ArmMatrix::Zero(mu.size(), mu.size());
    gamma1_for(flat, "noncontext");

    if (inst.num_arms == 2) {
        const TwoArmedLimits lim = two_armed_limits(two_armed_model(inst), draws, seed + 2);
        std::cout << "two_armed_gamma2 " << format_real(lim.gamma2) << " se " << format_real(lim.standard_error)
                  << " strict_improvement " << (lim.strict_improvement ? 1 : 0) << '\n';
    }
    return 0;
}

int cmd_selftest() {
    bool ok = true;
    for (const auto& c : avbai::checks::run_all()) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        ok = ok && c.passed;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Asymptotic anytime-valid best-arm identification"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    auto* run = app.add_subcommand("run", "replicated experiment; writes runs.csv and summary.csv");
    run->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string preset = "mu1-bernoulli", rho = "0.06", variants = "contextual,noncontext", out = "out";
    std::string solver = "dinkelbach", trajectory;
    double alpha = 0.1, box = 100.0, epsilon = 0.01, vmax = 1.0;
    std::size_t t0 = 100, reps = 100, cap = 30000, refit_every = 1;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    bool no_timing = false, uniform_burn_in = true;
    run->add_option("--preset", preset, "mu1-bernoulli | mu1-beta | mu2-bernoulli | mu2-beta");
    run->add_option("--alpha", alpha, "error tolerance");
    run->add_option("--rho", rho, "mixture width, or auto:<t*> to tune for t*");
    run->add_option("--t0", t0, "burn-in");
    run->add_option("--reps", reps, "replications per variant");
    run->add_option("--seed", seed, "base seed; replication r uses seed + r");
    run->add_option("--variants", variants, "comma list of contextual, noncontext, uniform");
    run->add_option("--cap", cap, "horizon cap");
    run->add_option("--out", out, "output directory");
    run->add_option("--threads", threads, "worker threads (0 = all cores)");
    run->add_option("--box", box, "theta box radius S");
    run->add_option("--epsilon", epsilon, "variance floor");
    run->add_option("--vmax", vmax, "variance cap");
    run->add_option("--refit-every", refit_every, "nuisance refit cadence in steps");
    run->add_option("--uniform-burn-in", uniform_burn_in, "sample uniformly while t <= t0 (1/0)");
    run->add_option("--snr-solver", solver, "dinkelbach | active-set");
    run->add_option("--trajectory", trajectory, "per-step CSV for replication 0 of the first variant");
    run->add_flag("--no-timing", no_timing, "write wall_ms = 0 (byte-reproducible output)");

    auto* oracle = app.add_subcommand("oracle", "population constants for a preset");
    oracle->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::size_t draws = 200000;
    int iterations = 2000;
    oracle->add_option("--preset", preset, "preset name");
    oracle->add_option("--alpha", alpha, "error tolerance for the reported bounds");
    oracle->add_option("--draws", draws, "Monte Carlo context draws");
    oracle->add_option("--iterations", iterations, "PSGD iterations for Gamma_1");
    oracle->add_option("--seed", seed, "Monte Carlo seed");
    oracle->add_option("--epsilon", epsilon, "variance floor");
    oracle->add_option("--vmax", vmax, "variance cap");

    app.add_subcommand("selftest", "run the invariant checks");

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        std::vector<char*> cargs;
        for (auto& a : args) cargs.push_back(a.data());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (app.got_subcommand("selftest")) return cmd_selftest();
        if (app.got_subcommand("oracle")) return cmd_oracle(preset, alpha, draws, iterations, seed, epsilon, vmax);

        avbai::ExperimentConfig cfg;
        cfg.preset = preset;
        cfg.instance = avbai::make_preset(preset);
        cfg.run.boundary.alpha = alpha;
        cfg.run.boundary.rho = parse_rho(rho, alpha);
        cfg.run.boundary.burn_in = t0;
        cfg.run.horizon_cap = cap;
        cfg.run.refit_every = refit_every;
        cfg.run.uniform_burn_in = uniform_burn_in;
        cfg.run.policy.box_radius = box;
        cfg.run.policy.variance_floor = epsilon;
        cfg.run.policy.variance_cap = vmax;
        cfg.run.policy.snr.method = parse_solver(solver);
        cfg.run.weight_snr.method = cfg.run.policy.snr.method;
        cfg.variants = parse_variants(variants);
        cfg.replications = reps;
        cfg.base_seed = seed;
        cfg.output_dir = out;
        cfg.threads = threads;
        cfg.record_timing = !no_timing;
        cfg.validate();

        const auto summary = avbai::run_experiment(cfg, true, &std::cerr);
        if (!trajectory.empty()) {
            std::ofstream f(trajectory);
            if (!f) throw std::runtime_error("cannot write " + trajectory);
            avbai::TrajectoryWriter writer(f, cfg.instance.num_arms);
            avbai::RunConfig rc = cfg.run;
            rc.policy.mode = cfg.variants.front();
            rc.trajectory = &writer;
            std::mt19937_64 rng(cfg.base_seed);
            avbai::run_bai(cfg.instance, rc, rng);
        }
        avbai::write_summary_csv(std::cout, summary.variants);
        if (summary.variants.size() >= 2) avbai::print_comparison(std::cout, avbai::compare_variants(summary.variants));
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
