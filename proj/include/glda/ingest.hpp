#pragma once

// Delimited-text ingestion of cohort and outcome files, and within-subject
// z-score standardization.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "glda/errors.hpp"
#include "glda/types.hpp"

namespace glda {

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Splits one line; double quotes group fields and "" escapes a quote.
inline std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows; // rows[i] is data row i + 1
};

inline Table read_table(std::istream& in, char delim) {
    Table t;
    std::string line;
    bool have_header = false;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!have_header) {
            if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
            if (trim(line).empty()) continue;
            t.header = split_fields(line, delim);
            have_header = true;
            continue;
        }
        if (trim(line).empty()) continue;
        ++row;
        auto fields = split_fields(line, delim);
        if (fields.size() != t.header.size())
            throw ParseError(row, "", "expected " + std::to_string(t.header.size()) + " fields, found " +
                                          std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    return t;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    return in;
}

inline double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
    if (cell.empty()) throw ParseError(row, column, "missing value");
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') throw ParseError(row, column, "non-numeric value '" + cell + "'");
    if (!std::isfinite(v)) throw ParseError(row, column, "non-finite value '" + cell + "'");
    return v;
}

inline bool parse_int(std::string_view s, std::int64_t& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (*b == '+') ++b;
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

} // namespace detail

/// Integer epoch seconds, or RFC 3339 ("2015-10-08T09:30:00Z",
/// "2015-10-08T09:30:00.5+02:00"; a space may replace the 'T').
inline std::optional<Timestamp> parse_timestamp(const std::string& text) {
    using namespace std::chrono;
    std::int64_t secs = 0;
    if (detail::parse_int(text, secs)) return Timestamp{secs * 1000000, text};
    const std::string& s = text;
    auto digits = [&](std::size_t pos, std::size_t len, int& out) {
        if (pos + len > s.size()) return false;
        out = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (s[i] < '0' || s[i] > '9') return false;
            out = out * 10 + (s[i] - '0');
        }
        return true;
    };
    int Y, Mo, D, h, mi, se;
    if (!digits(0, 4, Y) || s.size() < 19 || s[4] != '-' || !digits(5, 2, Mo) || s[7] != '-' || !digits(8, 2, D))
        return std::nullopt;
    if (s[10] != 'T' && s[10] != 't' && s[10] != ' ') return std::nullopt;
    if (!digits(11, 2, h) || s[13] != ':' || !digits(14, 2, mi) || s[16] != ':' || !digits(17, 2, se)) return std::nullopt;
    const year_month_day ymd{year{Y}, month{static_cast<unsigned>(Mo)}, day{static_cast<unsigned>(D)}};
    if (!ymd.ok() || h > 23 || mi > 59 || se > 60) return std::nullopt;
    std::size_t pos = 19;
    std::int64_t frac_us = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::int64_t scale = 100000;
        const std::size_t start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            frac_us += (s[pos] - '0') * scale;
            scale /= 10;
            ++pos;
        }
        if (pos == start) return std::nullopt;
    }
    std::int64_t offset_s = 0;
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
        ++pos;
    } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
        int oh, om;
        if (!digits(pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' || !digits(pos + 4, 2, om))
            return std::nullopt;
        offset_s = (s[pos] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;
    const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
    const std::int64_t total = days * 86400 + h * 3600 + mi * 60 + se - offset_s;
    return Timestamp{total * 1000000 + frac_us, text};
}

struct CohortSchema {
    std::string subject_column = "subject";
    std::string timestamp_column = "timestamp"; // used when present in the header
    char delimiter = ',';
};

/// Parses a cohort table. Subjects get dense indices in order of first
/// appearance; every other non-timestamp column is a variable.
inline CohortDataset parse_cohort(std::istream& in, const CohortSchema& schema = {}) {
    const detail::Table t = detail::read_table(in, schema.delimiter);
    if (t.header.empty()) throw ValidationError("cohort: empty file (no header row)");
    int subject_col = -1;
    int time_col = -1;
    std::vector<int> var_cols;
    CohortDataset d;
    for (int c = 0; c < static_cast<int>(t.header.size()); ++c) {
        if (t.header[c] == schema.subject_column)
            subject_col = c;
        else if (!schema.timestamp_column.empty() && t.header[c] == schema.timestamp_column)
            time_col = c;
        else {
            var_cols.push_back(c);
            d.variable_names.push_back(t.header[c]);
        }
    }
    if (subject_col < 0) throw ValidationError("cohort: missing subject column '" + schema.subject_column + "'");
    if (var_cols.empty()) throw ValidationError("cohort: no variable columns");
    if (t.rows.empty()) throw ValidationError("cohort: no data rows");
    const std::size_t N = t.rows.size();
    d.values.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(var_cols.size()));
    d.subject.reserve(N);
    std::unordered_map<std::string, int> index_of;
    for (std::size_t r = 0; r < N; ++r) {
        const auto& row = t.rows[r];
        const std::size_t row_no = r + 1;
        const std::string& sid = row[subject_col];
        if (sid.empty()) throw ParseError(row_no, schema.subject_column, "empty subject identifier");
        auto [it, inserted] = index_of.emplace(sid, static_cast<int>(d.subject_ids.size()));
        if (inserted) d.subject_ids.push_back(sid);
        d.subject.push_back(it->second);
        if (time_col >= 0) {
            const std::string& cell = row[time_col];
            if (cell.empty()) throw ParseError(row_no, t.header[time_col], "missing timestamp");
            auto ts = parse_timestamp(cell);
            if (!ts) throw ParseError(row_no, t.header[time_col], "unparseable timestamp '" + cell + "'");
            d.timestamp.push_back(std::move(*ts));
        }
        for (std::size_t v = 0; v < var_cols.size(); ++v)
            d.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(v)) =
                detail::parse_number(row[var_cols[v]], row_no, t.header[var_cols[v]]);
    }
    d.validate();
    return d;
}

inline CohortDataset load_cohort(const std::string& path, const CohortSchema& schema = {}) {
    auto in = detail::open_input(path);
    return parse_cohort(in, schema);
}

/// Parses an outcome table: a subject column plus numeric outcome columns.
/// Empty cells are missing (NaN). When `cohort_subjects` is given, subjects
/// absent from it are reported in `warnings`.
inline OutcomeTable parse_outcomes(std::istream& in, char delimiter = ',',
                                   const std::vector<std::string>* cohort_subjects = nullptr,
                                   const std::string& subject_column = "subject") {
    const detail::Table t = detail::read_table(in, delimiter);
    int subject_col = -1;
    OutcomeTable o;
    std::vector<int> cols;
    for (int c = 0; c < static_cast<int>(t.header.size()); ++c) {
        if (t.header[c] == subject_column) {
            subject_col = c;
        } else {
            cols.push_back(c);
            o.outcome_names.push_back(t.header[c]);
        }
    }
    if (cols.empty()) throw ValidationError("outcomes: no outcome columns");
    if (subject_col < 0) throw ValidationError("outcomes: missing subject column '" + subject_column + "'");
    o.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string& sid = row[subject_col];
        if (sid.empty()) throw ParseError(r + 1, subject_column, "empty subject identifier");
        if (!seen.insert(sid).second) throw ParseError(r + 1, subject_column, "duplicate subject '" + sid + "'");
        o.subject_ids.push_back(sid);
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const std::string& cell = row[cols[j]];
            o.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                cell.empty() ? std::numeric_limits<double>::quiet_NaN() : detail::parse_number(cell, r + 1, t.header[cols[j]]);
        }
    }
    if (cohort_subjects) {
        const std::unordered_set<std::string> known(cohort_subjects->begin(), cohort_subjects->end());
        std::string unknown;
        for (const auto& sid : o.subject_ids)
            if (!known.count(sid)) unknown += (unknown.empty() ? "" : ", ") + sid;
        if (!unknown.empty()) o.warnings.push_back("outcome subjects not in cohort: " + unknown);
    }
    return o;
}

inline OutcomeTable load_outcomes(const std::string& path, char delimiter = ',',
                                  const std::vector<std::string>* cohort_subjects = nullptr) {
    auto in = detail::open_input(path);
    return parse_outcomes(in, delimiter, cohort_subjects);
}

/// Per-subject, per-variable location and scale (sample sd, n - 1).
struct SubjectScaling {
    std::vector<std::string> subject_ids;
    std::vector<std::string> variable_names;
    Eigen::MatrixXd mean; // M x V
    Eigen::MatrixXd sd;   // M x V

    /// Maps standardized values back to the raw scale.
    [[nodiscard]] CohortDataset invert(const CohortDataset& standardized) const {
        CohortDataset out = standardized;
        for (int n = 0; n < out.n_obs(); ++n) {
            const int m = out.subject[n];
            out.values.row(n) = standardized.values.row(n).cwiseProduct(sd.row(m)) + mean.row(m);
        }
        return out;
    }
};

class StandardizationError : public ValidationError {
public:
    explicit StandardizationError(std::vector<std::pair<std::string, std::string>> pairs)
        : ValidationError(describe(pairs)), pairs_(std::move(pairs)) {}

    /// (subject, variable) pairs with zero variance or fewer than two observations.
    [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& pairs() const { return pairs_; }

private:
    static std::string describe(const std::vector<std::pair<std::string, std::string>>& pairs) {
        std::string s = "cannot standardize " + std::to_string(pairs.size()) +
                        " (subject, variable) pair(s) with zero variance or fewer than 2 observations:";
        for (std::size_t i = 0; i < pairs.size() && i < 20; ++i) s += " (" + pairs[i].first + ", " + pairs[i].second + ")";
        if (pairs.size() > 20) s += " ...";
        return s;
    }

    std::vector<std::pair<std::string, std::string>> pairs_;
};

struct StandardizedCohort {
    CohortDataset data;
    SubjectScaling scaling;
};

/// z-scores every variable within each subject.
inline StandardizedCohort standardize_within_subject(const CohortDataset& data) {
    data.validate();
    const int M = data.n_subjects();
    const int V = data.n_vars();
    const auto rows = data.rows_by_subject();
    StandardizedCohort out{data, {data.subject_ids, data.variable_names, Eigen::MatrixXd(M, V), Eigen::MatrixXd(M, V)}};
    std::vector<std::pair<std::string, std::string>> bad;
    for (int m = 0; m < M; ++m) {
        const double n = static_cast<double>(rows[m].size());
        for (int v = 0; v < V; ++v) {
            double mean = 0.0;
            for (int r : rows[m]) mean += data.values(r, v);
            mean /= n;
            double ss = 0.0;
            for (int r : rows[m]) ss += (data.values(r, v) - mean) * (data.values(r, v) - mean);
            const double sd = n > 1.0 ? std::sqrt(ss / (n - 1.0)) : 0.0;
            if (!std::isfinite(mean) || !std::isfinite(sd))
                throw NumericalError("standardize: moments of subject '" + data.subject_ids[m] + "' variable " +
                                     std::to_string(v) + " overflow");
            out.scaling.mean(m, v) = mean;
            out.scaling.sd(m, v) = sd;
            if (!(sd > 0.0)) {
                bad.emplace_back(data.subject_ids[m],
                                 data.variable_names.empty() ? std::to_string(v) : data.variable_names[v]);
                continue;
            }
            for (int r : rows[m]) out.data.values(r, v) = (data.values(r, v) - mean) / sd;
        }
    }
    if (!bad.empty()) throw StandardizationError(std::move(bad));
    return out;
}

} // namespace glda
