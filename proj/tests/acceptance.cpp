// Runs the acceptance criteria and prints one PASS/FAIL line for each.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "glda/glda.hpp"
#include "glda/gmm.hpp"
#include "glda/posterior.hpp"
#include "glda/synth.hpp"
#include "glda/validate.hpp"
#include "support.hpp"

using namespace glda;
namespace fs = std::filesystem;
using testing_support::make_cohort;
using testing_support::random_spd;
using testing_support::random_vector;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<Eigen::VectorXd> means_of(const std::vector<Gaussian>& comps) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& c : comps) out.push_back(c.mean());
    return out;
}

// log p(x, z) = log p(x, z, params) - log p(params | x, z) at an arbitrary fixed params.
double log_collapsed_joint(const CohortDataset& data, const std::vector<int>& labels, const GldaParams& params,
                           const PriorConfig& prior) {
    const int K = params.n_components();
    double post = 0.0;
    for (int m = 0; m < data.n_subjects(); ++m) {
        Eigen::VectorXd conc = Eigen::VectorXd::Constant(K, prior.alpha);
        for (int n = 0; n < data.n_obs(); ++n)
            if (data.subject[n] == m) conc[labels[n]] += 1.0;
        post += dirichlet_logpdf(params.theta.row(m).transpose(), conc);
    }
    for (int k = 0; k < K; ++k) {
        NiwStats s(data.n_vars());
        for (int n = 0; n < data.n_obs(); ++n)
            if (labels[n] == k) s.add(data.values.row(n).transpose());
        post += niw_logpdf(params.components[k].mean(), params.components[k].cov(), niw_posterior(prior.niw, s));
    }
    return glda_joint_logdensity(data, labels, params, prior) - post;
}

void criterion1(Check& c) {
    Rng rng(1);
    double worst = 0.0;
    for (int V : {1, 2, 4}) {
        const Niw prior{random_vector(V, rng), 0.7, V + 3.5, random_spd(V, rng)};
        NiwStats stats(V);
        Niw seq = prior;
        for (int i = 0; i < 50; ++i) {
            const Eigen::VectorXd x = random_vector(V, rng, 2.0);
            stats.add(x);
            seq = niw_update_one(seq, x);
        }
        const Niw batch = niw_posterior(prior, stats);
        worst = std::max({worst, std::abs(seq.lambda - batch.lambda), std::abs(seq.nu - batch.nu),
                          (seq.mu0 - batch.mu0).cwiseAbs().maxCoeff(), (seq.psi - batch.psi).cwiseAbs().maxCoeff()});
    }
    c.require(worst <= 1e-10, "batch vs sequential NIW");
    c.detail << "niw max diff " << worst << "; ";

    Eigen::MatrixXd x(5, 1);
    x << -1.0, 0.4, 1.7, -0.3, 2.2;
    const CohortDataset d = make_cohort({0, 0, 1, 1, 1}, x, 2);
    PriorConfig prior = PriorConfig::defaults(1);
    prior.alpha = 0.7;
    const std::vector<int> labels{0, 1, 1, 0, 1};
    GldaParams anchor;
    anchor.theta.resize(2, 2);
    anchor.theta << 0.4, 0.6, 0.3, 0.7;
    anchor.components.emplace_back(Eigen::VectorXd::Constant(1, -0.2), Eigen::MatrixXd::Constant(1, 1, 0.8));
    anchor.components.emplace_back(Eigen::VectorXd::Constant(1, 0.9), Eigen::MatrixXd::Constant(1, 1, 1.3));
    const GldaGibbsState state(d, 2, prior, labels);
    double cond_err = 0.0;
    for (int n = 0; n < 5; ++n) {
        Eigen::Vector2d lj;
        for (int k = 0; k < 2; ++k) {
            auto z = labels;
            z[n] = k;
            lj[k] = log_collapsed_joint(d, z, anchor, prior);
        }
        const Eigen::Vector2d oracle = lj.array() - log_sum_exp(lj);
        cond_err = std::max(cond_err, (state.conditional_log_probs(n) - oracle).cwiseAbs().maxCoeff());
    }
    c.require(cond_err <= 1e-8, "collapsed conditional vs enumeration");
    c.detail << "conditional max diff " << cond_err;
}

void criterion2(Check& c) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto t0 = std::chrono::steady_clock::now();
        SynthConfig sc;
        sc.M = 20;
        sc.K = 3;
        sc.V = 4;
        sc.obs_per_subject = {200};
        sc.mean_separation = 4.0;
        sc.alpha = 1.0;
        sc.seed = 100 + seed;
        const SynthGlda s = generate_glda(sc);
        GldaFitConfig fc;
        fc.K = 3;
        fc.seed = seed;
        fc.keep_traces = false;
        const GldaPosterior post = glda_fit(s.data, fc);
        const auto truth = means_of(s.truth.components);
        const auto est = means_of(post.params.components);
        const Permutation perm = align_labels(truth, est);
        double mean_err = 0.0;
        for (int k = 0; k < 3; ++k) mean_err = std::max(mean_err, (est[perm[k]] - truth[k]).cwiseAbs().maxCoeff());
        const double theta_mae = (permute_columns(post.params.theta, perm) - s.truth.theta).cwiseAbs().mean();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c.require(mean_err < 0.1, "seed " + std::to_string(seed) + " means");
        c.require(theta_mae < 0.05, "seed " + std::to_string(seed) + " theta");
        c.require(post.diagnostics.max_rhat < 1.1, "seed " + std::to_string(seed) + " rhat");
        c.require(secs < 180.0, "seed " + std::to_string(seed) + " runtime");
        char buf[160];
        std::snprintf(buf, sizeof buf, "seed %d: mean err %.3f, theta mae %.4f, rhat %.3f, %.1fs; ", static_cast<int>(seed),
                      mean_err, theta_mae, post.diagnostics.max_rhat, secs);
        c.detail << buf;
    }
}

void criterion3(Check& c) {
    SynthConfig sc;
    sc.M = 20;
    sc.K = 4;
    sc.V = 3;
    sc.obs_per_subject = {50};
    sc.mean_separation = 1.5;
    sc.seed = 3;
    const SynthGmm s = generate_gmm(sc);
    GmmFitConfig cfg;
    cfg.K = 4;
    cfg.tol = 1e-12;
    cfg.seed = 3;
    const GmmFit fit = gmm_fit(s.data, cfg);
    double worst_drop = 0.0;
    for (std::size_t i = 1; i < fit.trace.size(); ++i) worst_drop = std::min(worst_drop, fit.trace[i] - fit.trace[i - 1]);
    c.require(worst_drop >= -1e-9, "EM log-likelihood monotone");
    c.detail << fit.trace.size() << " EM iterations, worst step " << worst_drop << "; ";

    Rng rng(33);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd x(2000, 2);
    std::vector<int> subj(2000);
    for (int n = 0; n < 2000; ++n) {
        const double centre = n < 1000 ? 5.0 : -5.0;
        x(n, 0) = centre + normal(rng);
        x(n, 1) = centre + normal(rng);
        subj[n] = n % 10;
    }
    const CohortDataset blobs = make_cohort(subj, x, 10);
    GmmFitConfig bc;
    bc.K = 2;
    bc.seed = 4;
    const GmmFit two = gmm_fit(blobs, bc);
    const std::vector<Eigen::VectorXd> truth{Eigen::Vector2d(5, 5), Eigen::Vector2d(-5, -5)};
    const auto est = means_of(two.params.components);
    const Permutation perm = align_labels(truth, est);
    double err = 0.0;
    for (int k = 0; k < 2; ++k) err = std::max(err, (est[perm[k]] - truth[k]).cwiseAbs().maxCoeff());
    c.require(err < 0.2, "two-blob recovery");
    c.detail << "blob mean err " << err << "; ";

    const AssignmentTrace t = gmm_hard_assign(blobs, two.params);
    const Eigen::MatrixXd props = realized_proportions(t, 10, 2);
    bool exact = true;
    for (int m = 0; m < 10; ++m) {
        std::vector<int> per(2, 0);
        int total = 0;
        for (int n = 0; n < blobs.n_obs(); ++n)
            if (blobs.subject[n] == m) {
                ++total;
                ++per[t.labels[n]];
            }
        for (int k = 0; k < 2; ++k) exact = exact && props(m, k) == static_cast<double>(per[k]) / total;
    }
    c.require(exact, "realized proportions vs counting");
    c.detail << "counting oracle " << (exact ? "exact" : "mismatch");
}

void criterion4(Check& c) {
    Rng rng(4);
    const int M = 6, K = 4, V = 3;
    GldaParams p;
    p.theta.resize(M, K);
    for (int m = 0; m < M; ++m) p.theta.row(m) = dirichlet_sample(Eigen::VectorXd::Ones(K), rng).transpose();
    for (int k = 0; k < K; ++k) p.components.emplace_back(random_vector(V, rng, 2.0), random_spd(V, rng));
    std::vector<int> subj;
    Eigen::MatrixXd x(300, V);
    for (int n = 0; n < 300; ++n) {
        subj.push_back(n % M);
        x.row(n) = random_vector(V, rng, 4.0).transpose();
    }
    const CohortDataset d = make_cohort(subj, x, M);
    const AssignmentTrace t = glda_membership(d, p);
    const double row_err = (t.responsibilities.rowwise().sum().array() - 1.0).abs().maxCoeff();
    c.require(row_err <= 1e-9, "rows sum to one");

    GldaParams one;
    one.theta = Eigen::MatrixXd::Ones(M, 1);
    one.components.push_back(p.components[0]);
    const double k1 = glda_membership(d, one).responsibilities.minCoeff();
    c.require(k1 == 1.0, "K = 1 certainty");

    GldaParams w;
    w.theta = Eigen::RowVector2d(0.3, 0.7);
    w.components.emplace_back(Eigen::VectorXd::Constant(1, -1.0), Eigen::MatrixXd::Identity(1, 1));
    w.components.emplace_back(Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Identity(1, 1));
    const AssignmentTrace eq = glda_membership(make_cohort({0}, Eigen::MatrixXd::Zero(1, 1), 1), w);
    const double eq_err = std::max(std::abs(eq.responsibilities(0, 0) - 0.3), std::abs(eq.responsibilities(0, 1) - 0.7));
    c.require(eq_err <= 1e-12, "equal-density point");
    c.detail << "row sum err " << row_err << ", K=1 min " << k1 << ", weight err " << eq_err;
}

void criterion5(Check& c) {
    Eigen::VectorXd x(10), y(10);
    for (int i = 0; i < 10; ++i) {
        x[i] = i + 1;
        y[i] = 3.0 - 2.0 * x[i];
    }
    const RegressionResult perfect = ols_univariate(x, y);
    c.require(perfect.r2_adj == 1.0 && perfect.p_value < 1e-12, "perfect fit");
    c.detail << "perfect r2_adj " << perfect.r2_adj << " p " << perfect.p_value << "; ";

    std::vector<double> ps;
    for (int rep = 0; rep < 500; ++rep) {
        Rng rng = make_stream(5, static_cast<std::uint64_t>(rep));
        ps.push_back(ols_univariate(random_vector(1000, rng), random_vector(1000, rng)).p_value);
    }
    const double ks = testing_support::ks_statistic(ps, [](double p) { return std::clamp(p, 0.0, 1.0); });
    c.require(ks < testing_support::ks_critical_01(500), "null p-values uniform");
    c.detail << "KS D " << ks << " (crit " << testing_support::ks_critical_01(500) << "); ";

    // x = 1..4, y = (2, 4, 5, 8): Sxx = 5, Sxy = 9.5, slope 1.9, intercept 0,
    // SSE = 0.7, SST = 18.75. With 2 df the two-sided p is 1 - |t| / sqrt(t^2 + 2).
    const RegressionResult h = ols_univariate(Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(2, 4, 5, 8));
    const double slope = 9.5 / 5.0, sse = 0.7, sst = 18.75;
    const double tt = slope / std::sqrt(sse / 2.0 / 5.0);
    const double p_hand = 1.0 - tt / std::sqrt(tt * tt + 2.0);
    const double r2 = 1.0 - sse / sst, r2_adj = 1.0 - (1.0 - r2) * 3.0 / 2.0;
    const double hand_err = std::max({std::abs(h.slope - slope), std::abs(h.intercept), std::abs(h.r2 - r2),
                                      std::abs(h.r2_adj - r2_adj), std::abs(h.t_stat - tt), std::abs(h.p_value - p_hand)});
    c.require(hand_err <= 1e-10, "hand dataset");
    c.detail << "hand max diff " << hand_err;
}

void criterion6(Check& c) {
    // Heterogeneous vs homogeneous cohorts. The components overlap (means 1.5
    // from the origin, unit covariances); with well separated components both
    // methods recover the same per-subject weights and tie.
    const auto t0 = std::chrono::steady_clock::now();
    auto run = [&](double alpha, std::vector<double>& gp, std::vector<double>& gr, std::vector<double>& mp,
                   std::vector<double>& mr) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            SynthConfig sc;
            sc.M = 45;
            sc.K = 3;
            sc.V = 4;
            sc.obs_per_subject = {120};
            sc.alpha = alpha;
            sc.mean_separation = 1.5;
            sc.seed = 600 + seed;
            sc.outcome_rules = {OutcomeRule::first_class(3, "y", 40.0, 4.0)};
            const SynthGlda s = generate_glda(sc);
            const auto truth = means_of(s.truth.components);

            GldaFitConfig fc;
            fc.K = 3;
            fc.seed = seed;
            fc.keep_traces = false;
            const GldaPosterior post = glda_fit(s.data, fc);
            const Eigen::MatrixXd theta =
                permute_columns(post.params.theta, align_labels(truth, means_of(post.params.components)));

            GmmFitConfig ec;
            ec.K = 3;
            ec.seed = seed;
            const GmmFit em = gmm_fit(s.data, ec);
            const Eigen::MatrixXd props =
                permute_columns(realized_proportions(gmm_hard_assign(s.data, em.params), sc.M, 3),
                                align_labels(truth, means_of(em.params.components)));

            const Eigen::VectorXd y = s.outcomes->values.col(0);
            const RegressionResult rg = ols_univariate(theta.col(0), y);
            const RegressionResult rm = ols_univariate(props.col(0), y);
            gp.push_back(rg.p_value);
            gr.push_back(rg.r2_adj);
            mp.push_back(rm.p_value);
            mr.push_back(rm.r2_adj);
        }
    };
    std::vector<double> gp, gr, mp, mr;
    run(0.3, gp, gr, mp, mr);
    const double hg = median(gp), hm = median(mp), rg = median(gr), rm = median(mr);
    c.require(hg < hm, "heterogeneous median p");
    c.require(rg > rm, "heterogeneous median adjusted R2");
    char buf[256];
    std::snprintf(buf, sizeof buf, "alpha 0.3: median p glda %.3g vs gmm %.3g, median adj R2 %.4f vs %.4f; ", hg, hm, rg, rm);
    c.detail << buf;

    std::vector<double> gp2, gr2, mp2, mr2;
    run(100.0, gp2, gr2, mp2, mr2);
    const double lg = median(gp2), lm = median(mp2);
    const double orders = std::abs(std::log10(lg) - std::log10(lm));
    c.require(orders < 1.0, "homogeneous median p within one order of magnitude");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.require(secs < 1800.0, "runtime");
    std::snprintf(buf, sizeof buf, "alpha 100: median p glda %.3g vs gmm %.3g (%.2f decades); %.0fs", lg, lm, orders, secs);
    c.detail << buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion7(Check& c) {
    const fs::path root = fs::temp_directory_path() / ("glda_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string cli = GLDA_CLI_PATH;
    struct Cmd {
        std::string name;
        std::string args;
        std::vector<std::string> outputs;
    };
    // Each run uses its own directory; {d} is that directory, {s} the shared inputs.
    const std::vector<Cmd> cmds{
        {"simulate", "simulate --seed 9 --m 12 --obs 40 --out {d}/sim", {"sim/cohort.csv", "sim/outcomes.csv", "sim/truth.json"}},
        {"fit glda",
         "fit --cohort {s}/cohort.csv --k 3 --iters 200 --warmup 50 --seed 9 --trace {d}/trace.csv --scaling {d}/scaling.json --out {d}/glda.json",
         {"glda.json", "trace.csv", "scaling.json"}},
        {"fit gmm", "fit --cohort {s}/cohort.csv --model gmm --k 3 --seed 9 --out {d}/gmm.json", {"gmm.json"}},
        {"fit gmm gibbs",
         "fit --cohort {s}/cohort.csv --model gmm --gmm-method gibbs --k 3 --iters 100 --warmup 20 --seed 9 --out {d}/gmmg.json",
         {"gmmg.json"}},
        {"assign", "assign --fit {s}/glda.json --cohort {s}/cohort.csv --series-dir {d}/series --out {d}/assign.csv",
         {"assign.csv", "series/S001.csv"}},
        {"validate", "validate --fit {s}/glda.json --outcomes {s}/outcomes.csv --out {d}/validation.json", {"validation.json"}},
        {"compare", "compare --fit {s}/glda.json --fit {s}/gmm.json --outcomes {s}/outcomes.csv --out {d}/comparison.json",
         {"comparison.json"}},
    };
    auto expand = [](std::string s, const fs::path& d, const fs::path& shared) {
        for (auto [key, val] : {std::pair<std::string, std::string>{"{d}", d.string()}, {"{s}", shared.string()}}) {
            for (std::size_t pos; (pos = s.find(key)) != std::string::npos;) s.replace(pos, key.size(), val);
        }
        return s;
    };
    const fs::path shared = root / "shared";
    fs::create_directories(shared);
    int identical = 0;
    for (const auto& cmd : cmds) {
        std::vector<std::string> runs[2];
        for (int r = 0; r < 2; ++r) {
            const fs::path d = root / ("run" + std::to_string(r));
            fs::create_directories(d);
            const std::string line = cli + " " + expand(cmd.args, d, shared) + " > " + (d / "stdout.txt").string() + " 2>&1";
            const int rc = std::system(line.c_str());
            c.require(rc == 0, cmd.name + " exit status");
            for (const auto& o : cmd.outputs) runs[r].push_back(slurp(d / o));
        }
        const bool same = runs[0] == runs[1] && !runs[0].front().empty();
        c.require(same, cmd.name + " byte-identical");
        identical += same;
        // Later commands read the first run's artifacts.
        if (cmd.name == "simulate")
            for (const char* f : {"cohort.csv", "outcomes.csv"}) fs::copy_file(root / "run0/sim" / f, shared / f);
        for (const char* f : {"glda.json", "gmm.json"})
            if (fs::exists(root / "run0" / f) && !fs::exists(shared / f)) fs::copy_file(root / "run0" / f, shared / f);
    }
    c.detail << identical << "/" << cmds.size() << " commands byte-identical";
    fs::remove_all(root);
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
        {"conjugate-update oracle", criterion1},  {"glda recovery", criterion2},
        {"gmm baseline", criterion3},             {"membership probabilities", criterion4},
        {"regression engine", criterion5},        {"glda vs gmm on synthetic cohorts", criterion6},
        {"cli determinism", criterion7},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Check c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(c);
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail << "exception: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %zu (%s): %s [%.1fs]\n", c.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    c.detail.str().c_str(), secs);
        std::fflush(stdout);
        failures += !c.ok;
    }
    return failures == 0 ? 0 : 1;
}
