#pragma once

// Text and JSON artifacts: cohort/outcome/assignment tables and the JSON
// documents for fitted parameters, standardization, regression reports and
// synthetic ground truth.

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "glda/errors.hpp"
#include "glda/glda.hpp"
#include "glda/gmm.hpp"
#include "glda/ingest.hpp"
#include "glda/synth.hpp"
#include "glda/types.hpp"
#include "glda/validate.hpp"

namespace glda {

using Json = nlohmann::ordered_json;

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "";
    return nlohmann::json(v).dump();
}

namespace detail {

inline std::string quote_field(const std::string& s, char delim) {
    if (s.find(delim) == std::string::npos && s.find('"') == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

} // namespace detail

inline void write_cohort(std::ostream& os, const CohortDataset& d, char delim = ',') {
    const bool ts = d.has_timestamps();
    os << "subject";
    if (ts) os << delim << "timestamp";
    for (const auto& v : d.variable_names) os << delim << detail::quote_field(v, delim);
    os << '\n';
    for (int n = 0; n < d.n_obs(); ++n) {
        os << detail::quote_field(d.subject_ids[d.subject[n]], delim);
        if (ts) os << delim << detail::quote_field(d.timestamp[n]->text, delim);
        for (int v = 0; v < d.n_vars(); ++v) os << delim << format_double(d.values(n, v));
        os << '\n';
    }
}

inline void write_outcomes(std::ostream& os, const OutcomeTable& o, char delim = ',') {
    os << "subject";
    for (const auto& name : o.outcome_names) os << delim << detail::quote_field(name, delim);
    os << '\n';
    for (int i = 0; i < o.n_subjects(); ++i) {
        os << detail::quote_field(o.subject_ids[i], delim);
        for (int j = 0; j < o.n_outcomes(); ++j) os << delim << format_double(o.values(i, j));
        os << '\n';
    }
}

/// subject, timestamp, label, resp_0 .. resp_{K-1}; input row order.
inline void write_assignments(std::ostream& os, const AssignmentTrace& t, char delim = ',',
                              const std::vector<int>* rows = nullptr) {
    os << "subject" << delim << "timestamp" << delim << "label";
    for (int k = 0; k < t.n_components(); ++k) os << delim << "resp_" << k;
    os << '\n';
    auto emit = [&](int n) {
        os << detail::quote_field(t.subject_ids[t.subject[n]], delim) << delim;
        if (n < static_cast<int>(t.timestamp.size()) && t.timestamp[n]) os << detail::quote_field(t.timestamp[n]->text, delim);
        os << delim << t.labels[n];
        for (int k = 0; k < t.n_components(); ++k) os << delim << format_double(t.responsibilities(n, k));
        os << '\n';
    };
    if (rows)
        for (int n : *rows) emit(n);
    else
        for (int n = 0; n < t.n_obs(); ++n) emit(n);
}

inline Json matrix_json(const Eigen::MatrixXd& m) {
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

inline Json vector_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw ValidationError(what + ": expected a non-empty matrix");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw ValidationError(what + ": ragged matrix");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) throw ValidationError(what + ": non-numeric entry");
            m(r, c) = j[r][c].get<double>();
        }
    }
    return m;
}

inline Eigen::VectorXd vector_from_json(const Json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw ValidationError(what + ": expected a non-empty vector");
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ValidationError(what + ": non-numeric entry");
        v[i] = j[i].get<double>();
    }
    return v;
}

inline Json prior_json(const PriorConfig& p) {
    return Json{{"alpha", p.alpha},
                {"mu0", vector_json(p.niw.mu0)},
                {"lambda", p.niw.lambda},
                {"nu", p.niw.nu},
                {"psi", matrix_json(p.niw.psi)}};
}

inline PriorConfig prior_from_json(const Json& j) {
    PriorConfig p;
    p.alpha = j.at("alpha").get<double>();
    p.niw.mu0 = vector_from_json(j.at("mu0"), "prior mu0");
    p.niw.lambda = j.at("lambda").get<double>();
    p.niw.nu = j.at("nu").get<double>();
    p.niw.psi = matrix_from_json(j.at("psi"), "prior psi");
    p.validate();
    return p;
}

inline void put_components(Json& j, const std::vector<Gaussian>& comps) {
    Json mu = Json::array();
    Json sigma = Json::array();
    for (const auto& c : comps) {
        mu.push_back(vector_json(c.mean()));
        sigma.push_back(matrix_json(c.cov()));
    }
    j["mu"] = std::move(mu);
    j["sigma"] = std::move(sigma);
}

inline std::vector<Gaussian> components_from_json(const Json& j) {
    const Json& mu = j.at("mu");
    const Json& sigma = j.at("sigma");
    if (!mu.is_array() || !sigma.is_array() || mu.size() != sigma.size() || mu.empty())
        throw ValidationError("params: mu and sigma must list the same number of components");
    std::vector<Gaussian> out;
    for (std::size_t k = 0; k < mu.size(); ++k)
        out.emplace_back(vector_from_json(mu[k], "mu"), matrix_from_json(sigma[k], "sigma"), static_cast<int>(k));
    return out;
}

inline Json scaling_json(const SubjectScaling& s) {
    Json out = Json::object();
    for (std::size_t m = 0; m < s.subject_ids.size(); ++m) {
        Json vars = Json::object();
        for (std::size_t v = 0; v < s.variable_names.size(); ++v)
            vars[s.variable_names[v]] = Json{{"mean", s.mean(m, v)}, {"sd", s.sd(m, v)}};
        out[s.subject_ids[m]] = std::move(vars);
    }
    return out;
}

inline Json string_array(const std::vector<std::string>& v) {
    Json out = Json::array();
    for (const auto& s : v) out.push_back(s);
    return out;
}

inline Json glda_fit_json(const GldaPosterior& post, const CohortDataset& data, const Json& config) {
    Json j;
    j["model"] = "glda";
    j["config"] = config;
    j["prior"] = prior_json(post.prior);
    j["subjects"] = string_array(data.subject_ids);
    j["variables"] = string_array(data.variable_names);
    j["theta"] = matrix_json(post.params.theta);
    put_components(j, post.params.components);
    Json rhat = Json::object();
    for (const auto& r : post.diagnostics.rhat) rhat[r.name] = r.value;
    Json logd = Json::array();
    for (const auto& ch : post.chains) logd.push_back(ch.log_density);
    j["diagnostics"] = Json{{"max_split_rhat", post.diagnostics.max_rhat}, {"split_rhat", rhat}, {"log_density", logd}};
    j["warnings"] = string_array(post.warnings);
    return j;
}

inline Json gmm_fit_json(const GmmParams& params, const CohortDataset& data, const Json& config,
                         const Eigen::MatrixXd& proportions, const Json& diagnostics) {
    Json j;
    j["model"] = "gmm";
    j["config"] = config;
    j["subjects"] = string_array(data.subject_ids);
    j["variables"] = string_array(data.variable_names);
    j["theta"] = vector_json(params.theta);
    put_components(j, params.components);
    j["proportions"] = matrix_json(proportions);
    j["diagnostics"] = diagnostics;
    return j;
}

/// A fit artifact read back from JSON.
struct FitArtifact {
    std::string model; // "glda" or "gmm"
    Json config;
    std::vector<std::string> subjects;
    std::vector<std::string> variables;
    std::optional<GldaParams> glda;
    std::optional<GmmParams> gmm;
    Eigen::MatrixXd proportions; // gmm only

    [[nodiscard]] const std::vector<Gaussian>& components() const { return glda ? glda->components : gmm->components; }

    [[nodiscard]] std::vector<Eigen::VectorXd> means() const {
        std::vector<Eigen::VectorXd> out;
        for (const auto& c : components()) out.push_back(c.mean());
        return out;
    }
};

inline FitArtifact fit_from_json(const Json& j) {
    FitArtifact f;
    try {
        f.model = j.at("model").get<std::string>();
        f.config = j.value("config", Json::object());
        f.subjects = j.at("subjects").get<std::vector<std::string>>();
        f.variables = j.at("variables").get<std::vector<std::string>>();
        if (f.model == "glda") {
            GldaParams p;
            p.subject_ids = f.subjects;
            p.theta = matrix_from_json(j.at("theta"), "theta");
            p.components = components_from_json(j);
            p.validate();
            f.glda = std::move(p);
        } else if (f.model == "gmm") {
            GmmParams p;
            p.theta = vector_from_json(j.at("theta"), "theta");
            p.components = components_from_json(j);
            p.validate();
            f.gmm = std::move(p);
            if (j.contains("proportions")) f.proportions = matrix_from_json(j.at("proportions"), "proportions");
        } else {
            throw ValidationError("fit artifact: unknown model '" + f.model + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("fit artifact: ") + e.what());
    }
    return f;
}

inline FitArtifact load_fit(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
    }
    return fit_from_json(j);
}

inline Json regression_json(const RegressionResult& r) {
    return Json{{"model", r.model},     {"class", r.class_index},   {"outcome", r.outcome}, {"n", r.n},
                {"slope", r.slope},     {"intercept", r.intercept}, {"t", r.t_stat},        {"p_value", r.p_value},
                {"r2", r.r2},           {"r2_adj", r.r2_adj},       {"significance", r.band}};
}

inline Json regressions_json(const std::vector<RegressionResult>& rs) {
    Json out = Json::array();
    for (const auto& r : rs) out.push_back(regression_json(r));
    return out;
}

inline Json comparison_json(const ComparisonReport& rep) {
    Json cells = Json::array();
    for (const auto& c : rep.cells)
        cells.push_back(Json{{"class", c.class_index},
                             {"outcome", c.outcome},
                             {"matched_class", rep.second_for_first[c.class_index]},
                             {rep.first_model, regression_json(c.first)},
                             {rep.second_model, regression_json(c.second)},
                             {"winner", c.winner}});
    Json matched = Json::array();
    for (int p : rep.second_for_first) matched.push_back(p);
    return Json{{"models", Json::array({rep.first_model, rep.second_model})},
                {"K", rep.K},
                {"outcomes", string_array(rep.outcomes)},
                {"matched_classes", matched},
                {"cells", cells},
                {"note", "raw per-pair p-values; no multiple-comparison correction"}};
}

inline Json synth_truth_json(const SynthConfig& cfg, const Eigen::MatrixXd& theta, const std::vector<Gaussian>& comps,
                             const std::vector<std::string>& subjects, const std::string& model) {
    Json j;
    j["model"] = model;
    Json rules = Json::array();
    for (const auto& r : cfg.outcome_rules)
        rules.push_back(Json{{"name", r.name},
                             {"coefficients", vector_json(r.coefficients)},
                             {"intercept", r.intercept},
                             {"noise_sd", r.noise_sd}});
    j["config"] = Json{{"M", cfg.M},
                       {"K", cfg.K},
                       {"V", cfg.V},
                       {"obs_per_subject", cfg.obs_per_subject},
                       {"alpha", cfg.alpha},
                       {"mean_separation", cfg.mean_separation},
                       {"covariance_scale", cfg.covariance_scale},
                       {"niw_means", cfg.niw_means},
                       {"seed", cfg.seed},
                       {"outcome_rules", rules}};
    j["subjects"] = string_array(subjects);
    j["theta"] = matrix_json(theta);
    put_components(j, comps);
    return j;
}

} // namespace glda
