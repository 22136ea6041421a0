// glda_cli: fit | assign | validate | compare | simulate
//
// Exit codes: 0 ok, 2 input error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "glda/errors.hpp"
#include "glda/glda.hpp"
#include "glda/gmm.hpp"
#include "glda/ingest.hpp"
#include "glda/io.hpp"
#include "glda/posterior.hpp"
#include "glda/synth.hpp"
#include "glda/validate.hpp"

namespace fs = std::filesystem;
using glda::Json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct Common {
    std::uint64_t seed = 0;
    std::string out;
    std::string delimiter = ",";

    [[nodiscard]] char delim() const {
        if (delimiter == "tab" || delimiter == "\\t" || delimiter == "\t") return '\t';
        if (delimiter.size() != 1) throw glda::ValidationError("--delimiter must be a single character or 'tab'");
        return delimiter[0];
    }
};

void add_common(CLI::App* sub, Common& c, const std::string& out_default) {
    c.out = out_default;
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", c.out, "Output path")->capture_default_str();
    sub->add_option("--delimiter", c.delimiter, "Field delimiter (single character or 'tab')")->capture_default_str();
}

std::ofstream open_output(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw glda::ValidationError("cannot write '" + path + "'");
    return out;
}

void write_json(const std::string& path, const Json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

// ---- fit --------------------------------------------------------------------

struct FitOptions {
    Common common;
    std::string cohort;
    std::string model = "glda";
    int k = 3;
    int iters = 1000;
    int warmup = 200;
    int chains = 2;
    double alpha = 1.0;
    bool no_standardize = false;
    std::string trace;
    std::string scaling;
    std::string gmm_method = "em";
    int restarts = 8;
    int max_iters = 500;
    double tol = 1e-7;
    double reg_covar = 1e-6;
    bool soft_proportions = false;
    std::string subject_column = "subject";
    std::string timestamp_column = "timestamp";

    [[nodiscard]] Json echo() const {
        Json j{{"command", "fit"},
               {"cohort", cohort},
               {"model", model},
               {"k", k},
               {"seed", common.seed},
               {"delimiter", std::string(1, common.delim())},
               {"standardize", !no_standardize},
               {"subject_column", subject_column},
               {"timestamp_column", timestamp_column}};
        if (model == "glda" || gmm_method == "gibbs") {
            j["iters"] = iters;
            j["warmup"] = warmup;
            j["chains"] = chains;
            j["alpha"] = alpha;
        }
        if (model == "gmm") {
            j["gmm_method"] = gmm_method;
            j["proportions"] = soft_proportions ? "soft" : "hard";
            if (gmm_method == "em") {
                j["restarts"] = restarts;
                j["max_iters"] = max_iters;
                j["tol"] = tol;
                j["reg_covar"] = reg_covar;
            }
        }
        return j;
    }
};

void add_fit(CLI::App& app, FitOptions& o) {
    auto* sub = app.add_subcommand("fit", "Fit a GLDA or GMM model to a cohort");
    add_common(sub, o.common, "fit.json");
    sub->add_option("--cohort", o.cohort, "Cohort file")->required();
    sub->add_option("--model", o.model, "glda or gmm")->check(CLI::IsMember({"glda", "gmm"}))->capture_default_str();
    sub->add_option("--k", o.k, "Number of components")->required()->check(CLI::PositiveNumber);
    sub->add_option("--iters", o.iters, "Gibbs iterations per chain")->capture_default_str();
    sub->add_option("--warmup", o.warmup, "Warmup iterations per chain")->capture_default_str();
    sub->add_option("--chains", o.chains, "Number of Gibbs chains")->capture_default_str();
    sub->add_option("--alpha", o.alpha, "Dirichlet concentration of the prior")->capture_default_str();
    sub->add_flag("--no-standardize", o.no_standardize, "Fit the raw values instead of within-subject z-scores");
    sub->add_option("--trace", o.trace, "Write the per-iteration log density trace to this file");
    sub->add_option("--scaling", o.scaling, "Write the standardization side-table to this file");
    sub->add_option("--gmm-method", o.gmm_method, "em or gibbs")->check(CLI::IsMember({"em", "gibbs"}))->capture_default_str();
    sub->add_option("--restarts", o.restarts, "EM restarts")->capture_default_str();
    sub->add_option("--max-iters", o.max_iters, "EM iteration cap")->capture_default_str();
    sub->add_option("--tol", o.tol, "EM relative tolerance")->capture_default_str();
    sub->add_option("--reg-covar", o.reg_covar, "EM covariance ridge")->capture_default_str();
    sub->add_flag("--soft-proportions", o.soft_proportions, "Average GMM responsibilities instead of counting hard labels");
    sub->add_option("--subject-column", o.subject_column)->capture_default_str();
    sub->add_option("--timestamp-column", o.timestamp_column)->capture_default_str();
}

glda::CohortDataset read_cohort(const std::string& path, char delim, const std::string& subject_column,
                                const std::string& timestamp_column) {
    glda::CohortSchema schema;
    schema.delimiter = delim;
    schema.subject_column = subject_column;
    schema.timestamp_column = timestamp_column;
    return glda::load_cohort(path, schema);
}

void write_trace(const std::string& path, const glda::GldaPosterior& post) {
    auto out = open_output(path);
    out << "chain,iteration,phase,log_density\n";
    for (std::size_t c = 0; c < post.chains.size(); ++c) {
        const auto& ld = post.chains[c].log_density;
        for (std::size_t i = 0; i < ld.size(); ++i)
            out << c << ',' << i << ',' << (static_cast<int>(i) < post.config.n_warmup ? "warmup" : "sample") << ','
                << glda::format_double(ld[i]) << '\n';
    }
}

int run_fit(const FitOptions& o) {
    const char delim = o.common.delim();
    glda::CohortDataset raw = read_cohort(o.cohort, delim, o.subject_column, o.timestamp_column);
    std::optional<glda::SubjectScaling> scaling;
    glda::CohortDataset data;
    if (o.no_standardize) {
        data = std::move(raw);
    } else {
        auto s = glda::standardize_within_subject(raw);
        data = std::move(s.data);
        scaling = std::move(s.scaling);
    }
    if (!o.scaling.empty()) {
        if (!scaling) throw glda::ValidationError("--scaling needs standardization; drop --no-standardize");
        write_json(o.scaling, glda::scaling_json(*scaling));
    }

    glda::GldaFitConfig gcfg;
    gcfg.K = o.k;
    gcfg.n_iters = o.iters;
    gcfg.n_warmup = o.warmup;
    gcfg.n_chains = o.chains;
    gcfg.seed = o.common.seed;
    glda::PriorConfig prior = glda::PriorConfig::defaults(data.n_vars());
    prior.alpha = o.alpha;
    gcfg.prior = prior;

    Json artifact;
    if (o.model == "glda") {
        const glda::GldaPosterior post = glda::glda_fit(data, gcfg);
        artifact = glda::glda_fit_json(post, data, o.echo());
        if (!o.trace.empty()) write_trace(o.trace, post);
        for (const auto& w : post.warnings) std::cerr << "warning: " << w << '\n';
        std::cout << "glda fit: M=" << data.n_subjects() << " N=" << data.n_obs() << " V=" << data.n_vars()
                  << " K=" << o.k << " chains=" << o.chains << " iters=" << o.iters << " warmup=" << o.warmup << '\n';
        std::cout << "max split-Rhat: " << post.diagnostics.max_rhat
                  << (post.diagnostics.max_rhat < 1.1 ? "" : "  (chains may not have mixed)") << '\n';
        for (int k = 0; k < o.k; ++k)
            std::cout << "component " << k << " mean: "
                      << post.params.components[k].mean().transpose().format(Eigen::IOFormat(4, 0, ", ", "", "", "", "[", "]"))
                      << '\n';
    } else {
        glda::GmmParams params;
        Json diag;
        if (o.gmm_method == "em") {
            glda::GmmFitConfig ecfg;
            ecfg.K = o.k;
            ecfg.max_iters = o.max_iters;
            ecfg.tol = o.tol;
            ecfg.n_restarts = o.restarts;
            ecfg.seed = o.common.seed;
            ecfg.reg_covar = o.reg_covar;
            const glda::GmmFit fit = glda::gmm_fit(data, ecfg);
            params = fit.params;
            diag = Json{{"method", "em"},
                        {"log_likelihood", fit.log_likelihood},
                        {"iterations", fit.iterations},
                        {"converged", fit.converged},
                        {"best_restart", fit.best_restart},
                        {"collapsed_restarts", fit.collapsed_restarts},
                        {"trace", fit.trace}};
            std::cout << "gmm fit (em): N=" << data.n_obs() << " V=" << data.n_vars() << " K=" << o.k
                      << " log-likelihood=" << fit.log_likelihood << " iterations=" << fit.iterations
                      << (fit.converged ? " converged" : " (iteration cap reached)") << " best restart=" << fit.best_restart
                      << " collapsed restarts=" << fit.collapsed_restarts << '\n';
            if (!fit.converged) std::cerr << "warning: EM hit the iteration cap before converging\n";
        } else {
            params = glda::gmm_fit_gibbs(data, gcfg);
            diag = Json{{"method", "gibbs"}};
            std::cout << "gmm fit (gibbs): N=" << data.n_obs() << " V=" << data.n_vars() << " K=" << o.k << '\n';
        }
        const glda::AssignmentTrace trace = glda::gmm_hard_assign(data, params);
        const Eigen::MatrixXd props = o.soft_proportions ? glda::soft_proportions(trace, data.n_subjects(), o.k)
                                                         : glda::realized_proportions(trace, data.n_subjects(), o.k);
        artifact = glda::gmm_fit_json(params, data, o.echo(), props, diag);
    }
    artifact["standardization"] = scaling ? glda::scaling_json(*scaling) : Json(nullptr);
    write_json(o.common.out, artifact);
    std::cout << "wrote " << o.common.out << '\n';
    return 0;
}

// ---- assign -----------------------------------------------------------------

struct AssignOptions {
    Common common;
    std::string fit;
    std::string cohort;
    std::vector<std::string> subjects;
    std::string series_dir;
    std::string subject_column = "subject";
    std::string timestamp_column = "timestamp";
};

void add_assign(CLI::App& app, AssignOptions& o) {
    auto* sub = app.add_subcommand("assign", "Per-observation state membership under a fitted model");
    add_common(sub, o.common, "assignments.csv");
    sub->add_option("--fit", o.fit, "Fit artifact (JSON)")->required();
    sub->add_option("--cohort", o.cohort, "Cohort file")->required();
    sub->add_option("--subject", o.subjects, "Only emit these subjects (repeatable)");
    sub->add_option("--series-dir", o.series_dir, "Write one time-ordered state series per subject here");
    sub->add_option("--subject-column", o.subject_column)->capture_default_str();
    sub->add_option("--timestamp-column", o.timestamp_column)->capture_default_str();
}

std::string safe_file_name(std::string s) {
    for (char& c : s)
        if (c == '/' || c == '\\' || c == ':' || c == '\0') c = '_';
    return s;
}

int run_assign(const AssignOptions& o) {
    const char delim = o.common.delim();
    const glda::FitArtifact fit = glda::load_fit(o.fit);
    glda::CohortDataset data = read_cohort(o.cohort, delim, o.subject_column, o.timestamp_column);
    if (data.variable_names != fit.variables)
        throw glda::ValidationError("assign: cohort variables do not match the fitted model (" +
                                    std::to_string(data.n_vars()) + " vs " + std::to_string(fit.variables.size()) + ")");
    if (fit.config.value("standardize", true)) data = glda::standardize_within_subject(data).data;

    const glda::AssignmentTrace trace =
        fit.glda ? glda::glda_membership(data, *fit.glda) : glda::gmm_hard_assign(data, *fit.gmm);
    for (int m = 0; m < data.n_subjects(); ++m)
        if (trace.out_of_sample[m])
            std::cerr << "warning: subject '" << data.subject_ids[m]
                      << "' was not in the fit; using uniform weights for it\n";

    std::vector<int> selected;
    if (o.subjects.empty()) {
        for (int m = 0; m < data.n_subjects(); ++m) selected.push_back(m);
    } else {
        for (const auto& s : o.subjects) {
            const auto it = std::find(data.subject_ids.begin(), data.subject_ids.end(), s);
            if (it == data.subject_ids.end()) throw glda::ValidationError("assign: subject '" + s + "' is not in the cohort");
            selected.push_back(static_cast<int>(it - data.subject_ids.begin()));
        }
    }
    std::vector<bool> keep(data.n_subjects(), false);
    for (int m : selected) keep[m] = true;
    std::vector<int> rows;
    for (int n = 0; n < trace.n_obs(); ++n)
        if (keep[trace.subject[n]]) rows.push_back(n);

    {
        auto out = open_output(o.common.out);
        glda::write_assignments(out, trace, delim, &rows);
    }
    if (!o.series_dir.empty()) {
        fs::create_directories(o.series_dir);
        for (int m : selected) {
            const auto series = data.has_timestamps() ? glda::state_series(trace, m) : glda::state_series_by_index(trace, m);
            auto out = open_output((fs::path(o.series_dir) / (safe_file_name(data.subject_ids[m]) + ".csv")).string());
            out << "timestamp" << delim << "row" << delim << "label\n";
            for (const auto& p : series)
                out << (p.timestamp ? p.timestamp->text : "") << delim << p.row << delim << p.label << '\n';
        }
    }
    std::cout << "assigned " << rows.size() << " observations (" << fit.model << ", K=" << trace.n_components()
              << "); wrote " << o.common.out << '\n';
    return 0;
}

// ---- validate / compare -------------------------------------------------------

struct ValidateOptions {
    Common common;
    std::vector<std::string> fits;
    std::string outcomes;
};

glda::ModelValidation validate_artifact(const glda::FitArtifact& fit, const glda::OutcomeTable& outcomes,
                                        const std::string& name) {
    glda::SubjectWeights w;
    w.subject_ids = fit.subjects;
    if (fit.glda) {
        w.weights = fit.glda->theta;
    } else {
        if (fit.proportions.size() == 0) throw glda::ValidationError("validate: GMM fit artifact has no proportions");
        w.weights = fit.proportions;
    }
    if (static_cast<int>(w.subject_ids.size()) != w.weights.rows())
        throw glda::ValidationError("validate: fit artifact subject list does not match its weight rows");
    glda::ModelValidation mv;
    mv.model = name;
    mv.means = fit.means();
    mv.results = glda::validate_weights(w, outcomes, name);
    return mv;
}

void add_validate(CLI::App& app, ValidateOptions& o) {
    auto* sub = app.add_subcommand("validate", "Regress subject outcomes on each class weight");
    add_common(sub, o.common, "validation.json");
    sub->add_option("--fit", o.fits, "Fit artifact (JSON)")->required()->expected(1);
    sub->add_option("--outcomes", o.outcomes, "Outcome file")->required();
}

void add_compare(CLI::App& app, ValidateOptions& o) {
    auto* sub = app.add_subcommand("compare", "Side-by-side regression grids for two fits");
    add_common(sub, o.common, "comparison.json");
    sub->add_option("--fit", o.fits, "Two fit artifacts (JSON): first and second")->required()->expected(2);
    sub->add_option("--outcomes", o.outcomes, "Outcome file")->required();
}

Json validate_echo(const ValidateOptions& o, const std::string& command) {
    return Json{{"command", command},
                {"fits", o.fits},
                {"outcomes", o.outcomes},
                {"seed", o.common.seed},
                {"delimiter", std::string(1, o.common.delim())}};
}

int run_validate(const ValidateOptions& o) {
    const glda::FitArtifact fit = glda::load_fit(o.fits.at(0));
    const glda::OutcomeTable outcomes = glda::load_outcomes(o.outcomes, o.common.delim(), &fit.subjects);
    for (const auto& w : outcomes.warnings) std::cerr << "warning: " << w << '\n';
    const glda::ModelValidation mv = validate_artifact(fit, outcomes, fit.model);
    std::cout << glda::render_grid(mv.results);
    write_json(o.common.out, Json{{"config", validate_echo(o, "validate")}, {"results", glda::regressions_json(mv.results)}});
    return 0;
}

int run_compare(const ValidateOptions& o) {
    const glda::FitArtifact first = glda::load_fit(o.fits.at(0));
    const glda::FitArtifact second = glda::load_fit(o.fits.at(1));
    std::string first_name = first.model;
    std::string second_name = second.model;
    if (first_name == second_name) {
        first_name += "-a";
        second_name += "-b";
    }
    const glda::OutcomeTable outcomes = glda::load_outcomes(o.outcomes, o.common.delim(), &first.subjects);
    for (const auto& w : outcomes.warnings) std::cerr << "warning: " << w << '\n';
    const glda::ComparisonReport rep =
        glda::compare_models(validate_artifact(first, outcomes, first_name), validate_artifact(second, outcomes, second_name));
    std::cout << glda::render_comparison(rep);
    Json j{{"config", validate_echo(o, "compare")}};
    const Json body = glda::comparison_json(rep);
    for (const auto& [key, value] : body.items()) j[key] = value;
    write_json(o.common.out, j);
    return 0;
}

// ---- simulate ---------------------------------------------------------------

struct SimulateOptions {
    Common common;
    std::string model = "glda";
    int m = 45;
    int k = 3;
    int v = 4;
    int obs = 120;
    double alpha = 1.0;
    double separation = 4.0;
    double cov_scale = 1.0;
    int outcomes = 3;
    double outcome_coef = 40.0;
    double outcome_sd = 4.0;
    bool niw_means = false;
};

void add_simulate(CLI::App& app, SimulateOptions& o) {
    auto* sub = app.add_subcommand("simulate", "Generate a synthetic cohort with known ground truth");
    add_common(sub, o.common, "sim");
    sub->get_option("--out")->description("Output directory");
    sub->add_option("--model", o.model, "glda or gmm generative process")
        ->check(CLI::IsMember({"glda", "gmm"}))
        ->capture_default_str();
    sub->add_option("--m", o.m, "Subjects")->capture_default_str();
    sub->add_option("--k", o.k, "Components")->capture_default_str();
    sub->add_option("--v", o.v, "Variables")->capture_default_str();
    sub->add_option("--obs", o.obs, "Observations per subject")->capture_default_str();
    sub->add_option("--alpha", o.alpha, "Dirichlet concentration")->capture_default_str();
    sub->add_option("--separation", o.separation, "Distance of each placed mean from the origin")->capture_default_str();
    sub->add_option("--cov-scale", o.cov_scale, "Component covariance is this times the identity")->capture_default_str();
    sub->add_option("--outcomes", o.outcomes, "Outcome columns; outcome j loads on class j mod K")->capture_default_str();
    sub->add_option("--outcome-coef", o.outcome_coef, "Outcome slope on its class weight")->capture_default_str();
    sub->add_option("--outcome-sd", o.outcome_sd, "Outcome noise sd")->capture_default_str();
    sub->add_flag("--niw-means", o.niw_means, "Draw component parameters from the NIW prior");
}

int run_simulate(const SimulateOptions& o) {
    const char delim = o.common.delim();
    glda::SynthConfig cfg;
    cfg.M = o.m;
    cfg.K = o.k;
    cfg.V = o.v;
    cfg.obs_per_subject = {o.obs};
    cfg.alpha = o.alpha;
    cfg.mean_separation = o.separation;
    cfg.covariance_scale = o.cov_scale;
    cfg.niw_means = o.niw_means;
    cfg.seed = o.common.seed;
    if (o.outcomes < 0) throw glda::ValidationError("--outcomes must be non-negative");
    if (o.model == "glda")
        for (int j = 0; j < o.outcomes; ++j) {
            auto rule = glda::OutcomeRule::first_class(o.k, "outcome" + std::to_string(j + 1), o.outcome_coef, o.outcome_sd);
            if (o.k > 0 && j % o.k != 0) std::swap(rule.coefficients[0], rule.coefficients[j % o.k]);
            cfg.outcome_rules.push_back(std::move(rule));
        }

    const fs::path dir(o.common.out);
    fs::create_directories(dir);
    Json truth;
    if (o.model == "glda") {
        const glda::SynthGlda s = glda::generate_glda(cfg);
        {
            auto out = open_output((dir / "cohort.csv").string());
            glda::write_cohort(out, s.data, delim);
        }
        if (s.outcomes) {
            auto out = open_output((dir / "outcomes.csv").string());
            glda::write_outcomes(out, *s.outcomes, delim);
        }
        truth = glda::synth_truth_json(cfg, s.truth.theta, s.truth.components, s.data.subject_ids, "glda");
    } else {
        const glda::SynthGmm s = glda::generate_gmm(cfg);
        {
            auto out = open_output((dir / "cohort.csv").string());
            glda::write_cohort(out, s.data, delim);
        }
        truth = glda::synth_truth_json(cfg, s.truth.theta.transpose(), s.truth.components, s.data.subject_ids, "gmm");
    }
    truth["command"] = "simulate";
    write_json((dir / "truth.json").string(), truth);
    std::cout << "wrote synthetic " << o.model << " cohort (M=" << o.m << ", K=" << o.k << ", V=" << o.v
              << ", obs=" << o.obs << ") to " << dir.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian LDA and GMM state models for repeated-measures cohorts"};
    app.set_config("--config", "", "TOML/INI config file; command-line flags override it");
    app.require_subcommand(1);

    FitOptions fit;
    AssignOptions assign;
    ValidateOptions validate;
    ValidateOptions compare;
    SimulateOptions simulate;
    add_fit(app, fit);
    add_assign(app, assign);
    add_validate(app, validate);
    add_compare(app, compare);
    add_simulate(app, simulate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (app.got_subcommand("fit")) return run_fit(fit);
        if (app.got_subcommand("assign")) return run_assign(assign);
        if (app.got_subcommand("validate")) return run_validate(validate);
        if (app.got_subcommand("compare")) return run_compare(compare);
        if (app.got_subcommand("simulate")) return run_simulate(simulate);
    } catch (const glda::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const glda::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitInput;
}
