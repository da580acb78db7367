#pragma once

// Rule-based grading: criteria compare repetition-level metric aggregates
// against thresholds, an ordered decision table maps the outcome vector to a
// class in {1,2,3}, and a seeded random search tunes the thresholds against
// expert labels with GM_F1 (geometric mean of per-class F1) as objective.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "imuaug/error.hpp"
#include "imuaug/skeleton.hpp"

namespace imuaug {

inline constexpr int kNumClasses = 3;

struct Criterion {
    std::string id;
    std::string metric_id;
    std::string aggregate;   // "min" | "max" | "mean"
    std::string comparator;  // ">=" | "<="
    double threshold = 0.0;
    std::string description;
    std::optional<std::array<double, 2>> search_range;
};

struct DecisionRule {
    // One entry per criterion: 1 requires met, 0 requires unmet, -1 don't care.
    std::vector<int> require;
    int label = 0;
};

struct RuleSet {
    std::string exercise_id;
    std::vector<Criterion> criteria;
    std::vector<DecisionRule> rules;  // ordered, first match wins
};

inline void validate_ruleset(const RuleSet& rs) {
    if (rs.criteria.empty())
        throw ConfigError("ruleset " + rs.exercise_id + ": no criteria");
    std::unordered_set<std::string> seen;
    for (const Criterion& c : rs.criteria) {
        if (!seen.insert(c.id).second)
            throw ConfigError("ruleset " + rs.exercise_id + ": duplicate criterion " + c.id);
        if (c.aggregate != "min" && c.aggregate != "max" && c.aggregate != "mean")
            throw ConfigError("criterion " + c.id + ": bad aggregate " + c.aggregate);
        if (c.comparator != ">=" && c.comparator != "<=")
            throw ConfigError("criterion " + c.id + ": bad comparator " + c.comparator);
        if (c.search_range && !((*c.search_range)[0] <= (*c.search_range)[1]))
            throw ConfigError("criterion " + c.id + ": search range lo > hi");
    }
    if (rs.rules.empty())
        throw ConfigError("ruleset " + rs.exercise_id + ": no decision rules");
    bool has_default = false;
    for (const DecisionRule& r : rs.rules) {
        if (r.require.size() != rs.criteria.size())
            throw ConfigError("ruleset " + rs.exercise_id + ": rule arity mismatch");
        if (r.label < 1 || r.label > kNumClasses)
            throw ConfigError("ruleset " + rs.exercise_id + ": rule label out of range");
        bool all_wild = true;
        for (int v : r.require) {
            if (v != -1 && v != 0 && v != 1)
                throw ConfigError("ruleset " + rs.exercise_id + ": bad rule entry");
            all_wild = all_wild && v == -1;
        }
        has_default = has_default || all_wild;
    }
    if (!has_default)
        throw ConfigError("ruleset " + rs.exercise_id + ": decision table lacks a default rule");
}

inline bool criterion_met(const Criterion& c, double value) {
    // Boundary inclusive on both comparators.
    return c.comparator == ">=" ? value >= c.threshold : value <= c.threshold;
}

inline int label_from_outcomes(const RuleSet& rs, const std::vector<char>& outcomes) {
    for (const DecisionRule& r : rs.rules) {
        bool match = true;
        for (std::size_t j = 0; j < r.require.size() && match; ++j)
            match = r.require[j] == -1 || r.require[j] == outcomes[j];
        if (match) return r.label;
    }
    throw InternalError("ruleset " + rs.exercise_id + ": decision table not total");
}

struct LabelResult {
    int label = 0;
    std::vector<char> outcomes;  // per criterion, 1 = met
};

inline LabelResult assign_label(const KinematicMetrics& metrics, const RuleSet& rs) {
    LabelResult r;
    r.outcomes.resize(rs.criteria.size());
    for (std::size_t j = 0; j < rs.criteria.size(); ++j) {
        const Criterion& c = rs.criteria[j];
        r.outcomes[j] = criterion_met(c, metrics.aggregate(c.metric_id, c.aggregate));
    }
    r.label = label_from_outcomes(rs, r.outcomes);
    return r;
}

// ---- GM_F1 ----------------------------------------------------------------

struct ConfusionMatrix {
    int n = 0;
    std::vector<std::int64_t> counts;  // rows = true label, cols = assigned

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int classes) : n(classes), counts(classes * classes, 0) {}
    std::int64_t& at(int truth, int assigned) { return counts[truth * n + assigned]; }
    std::int64_t at(int truth, int assigned) const { return counts[truth * n + assigned]; }
};

inline std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
    if (cm.n < 1) throw InvalidArgument("per_class_f1: empty confusion matrix");
    std::vector<double> f1(cm.n);
    for (int i = 0; i < cm.n; ++i) {
        std::int64_t tp = cm.at(i, i), row = 0, col = 0;
        for (int j = 0; j < cm.n; ++j) {
            row += cm.at(i, j);
            col += cm.at(j, i);
        }
        const std::int64_t fn = row - tp, fp = col - tp;
        const std::int64_t denom = 2 * tp + fp + fn;
        // denom == 0 means no true and no predicted instances: vacuous class.
        f1[i] = denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
    return f1;
}

inline double gm_from_f1(const std::vector<double>& f1) {
    if (f1.empty()) throw InvalidArgument("gm_from_f1: no classes");
    double prod = 1.0;
    for (double v : f1) prod *= v;
    return std::pow(prod, 1.0 / static_cast<double>(f1.size()));
}

inline double gm_f1(const ConfusionMatrix& cm) { return gm_from_f1(per_class_f1(cm)); }

// ---- labeler evaluation ---------------------------------------------------

struct LabelerEval {
    ConfusionMatrix cm{kNumClasses};
    std::vector<double> f1;
    double gm = 0.0;
};

inline LabelerEval evaluate_labeler(const RuleSet& rs, const std::vector<KinematicMetrics>& reps,
                                    const std::vector<int>& expert_labels) {
    if (reps.empty()) throw InvalidArgument("evaluate_labeler: no repetitions");
    if (reps.size() != expert_labels.size())
        throw InvalidArgument("evaluate_labeler: labels do not match repetitions");
    LabelerEval ev;
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const int truth = expert_labels[i];
        if (truth < 1 || truth > kNumClasses)
            throw DataError("evaluate_labeler: expert label out of range");
        ev.cm.at(truth - 1, assign_label(reps[i], rs).label - 1) += 1;
    }
    ev.f1 = per_class_f1(ev.cm);
    ev.gm = gm_from_f1(ev.f1);
    return ev;
}

// ---- threshold search -----------------------------------------------------

// Aggregate values laid out rep-major so candidate scoring is a flat scan.
struct CriterionTable {
    std::size_t reps = 0;
    std::size_t criteria = 0;
    std::vector<double> values;

    double at(std::size_t rep, std::size_t crit) const { return values[rep * criteria + crit]; }
};

inline CriterionTable build_criterion_table(const RuleSet& rs,
                                            const std::vector<KinematicMetrics>& reps) {
    CriterionTable t;
    t.reps = reps.size();
    t.criteria = rs.criteria.size();
    t.values.reserve(t.reps * t.criteria);
    for (const KinematicMetrics& km : reps)
        for (const Criterion& c : rs.criteria)
            t.values.push_back(km.aggregate(c.metric_id, c.aggregate));
    return t;
}

struct ThresholdSearchResult {
    std::vector<double> thresholds;
    double score = -1.0;
    std::uint64_t budget = 0;
    std::uint64_t best_index = 0;  // earliest candidate attaining the score
    std::vector<std::array<double, 2>> ranges;
};

namespace detail {

inline double score_candidate(const RuleSet& rs, const CriterionTable& table,
                              const std::vector<int>& expert_labels, const double* thresholds,
                              std::vector<char>& outcome_scratch) {
    ConfusionMatrix cm(kNumClasses);
    for (std::size_t r = 0; r < table.reps; ++r) {
        const double* v = &table.values[r * table.criteria];
        for (std::size_t j = 0; j < table.criteria; ++j)
            outcome_scratch[j] = rs.criteria[j].comparator == ">=" ? v[j] >= thresholds[j]
                                                                   : v[j] <= thresholds[j];
        cm.at(expert_labels[r] - 1, label_from_outcomes(rs, outcome_scratch) - 1) += 1;
    }
    return gm_f1(cm);
}

}  // namespace detail

// Uniform independent sampling per criterion; running max with earliest-tie
// preference.  Raw 64-bit draws are mapped to [lo, hi) by hand so the
// candidate stream is identical across library implementations, which is what
// makes the budget-prefix property and cross-run determinism hold.
inline ThresholdSearchResult optimize_thresholds(const RuleSet& rs,
                                                 const std::vector<KinematicMetrics>& reps,
                                                 const std::vector<int>& expert_labels,
                                                 std::uint64_t budget, std::mt19937_64& rng) {
    if (reps.empty()) throw InvalidArgument("optimize_thresholds: no labeled repetitions");
    if (reps.size() != expert_labels.size())
        throw InvalidArgument("optimize_thresholds: labels do not match repetitions");
    if (budget < 1) throw InvalidArgument("optimize_thresholds: budget must be >= 1");
    for (int l : expert_labels)
        if (l < 1 || l > kNumClasses)
            throw DataError("optimize_thresholds: expert label out of range");
    validate_ruleset(rs);

    const CriterionTable table = build_criterion_table(rs, reps);
    ThresholdSearchResult res;
    res.budget = budget;
    res.ranges.resize(rs.criteria.size());
    for (std::size_t j = 0; j < rs.criteria.size(); ++j) {
        if (rs.criteria[j].search_range) {
            res.ranges[j] = *rs.criteria[j].search_range;
        } else {
            double lo = table.at(0, j), hi = table.at(0, j);
            for (std::size_t r = 1; r < table.reps; ++r) {
                lo = std::min(lo, table.at(r, j));
                hi = std::max(hi, table.at(r, j));
            }
            res.ranges[j] = {lo, hi};
        }
    }

    std::vector<double> cand(rs.criteria.size());
    std::vector<char> scratch(rs.criteria.size());
    res.thresholds.assign(rs.criteria.size(), 0.0);
    for (std::uint64_t i = 0; i < budget; ++i) {
        for (std::size_t j = 0; j < cand.size(); ++j) {
            const double u = uniform01(rng);
            cand[j] = res.ranges[j][0] + u * (res.ranges[j][1] - res.ranges[j][0]);
        }
        const double s = detail::score_candidate(rs, table, expert_labels, cand.data(), scratch);
        if (s > res.score) {
            res.score = s;
            res.best_index = i;
            res.thresholds = cand;
        }
    }
    return res;
}

inline RuleSet apply_thresholds(const RuleSet& rs, const std::vector<double>& thresholds) {
    if (thresholds.size() != rs.criteria.size())
        throw InvalidArgument("apply_thresholds: arity mismatch");
    RuleSet out = rs;
    for (std::size_t j = 0; j < thresholds.size(); ++j) out.criteria[j].threshold = thresholds[j];
    return out;
}

// ---- ruleset file I/O -----------------------------------------------------

inline RuleSet ruleset_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != 1)
            throw ConfigError("unsupported ruleset schema_version");
        RuleSet rs;
        rs.exercise_id = j.at("exercise_id").get<std::string>();
        for (const auto& jc : j.at("criteria")) {
            Criterion c;
            c.id = jc.at("id").get<std::string>();
            c.metric_id = jc.at("metric").get<std::string>();
            c.aggregate = jc.at("aggregate").get<std::string>();
            c.comparator = jc.at("comparator").get<std::string>();
            c.threshold = jc.at("threshold").get<double>();
            c.description = jc.value("description", "");
            if (jc.contains("search_range"))
                c.search_range = {{jc["search_range"].at(0).get<double>(),
                                   jc["search_range"].at(1).get<double>()}};
            rs.criteria.push_back(std::move(c));
        }
        for (const auto& jr : j.at("rules")) {
            DecisionRule r;
            r.require.assign(rs.criteria.size(), -1);
            r.label = jr.at("label").get<int>();
            if (jr.contains("when"))
                for (const auto& [key, val] : jr["when"].items()) {
                    int idx = -1;
                    for (std::size_t k = 0; k < rs.criteria.size(); ++k)
                        if (rs.criteria[k].id == key) idx = static_cast<int>(k);
                    if (idx < 0) throw ConfigError("rule references unknown criterion " + key);
                    r.require[idx] = val.get<bool>() ? 1 : 0;
                }
            rs.rules.push_back(std::move(r));
        }
        validate_ruleset(rs);
        return rs;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("ruleset file: ") + e.what());
    }
}

inline nlohmann::ordered_json ruleset_to_json(const RuleSet& rs) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["exercise_id"] = rs.exercise_id;
    j["criteria"] = nlohmann::ordered_json::array();
    for (const Criterion& c : rs.criteria) {
        nlohmann::ordered_json jc;
        jc["id"] = c.id;
        jc["metric"] = c.metric_id;
        jc["aggregate"] = c.aggregate;
        jc["comparator"] = c.comparator;
        jc["threshold"] = c.threshold;
        if (!c.description.empty()) jc["description"] = c.description;
        if (c.search_range) jc["search_range"] = {(*c.search_range)[0], (*c.search_range)[1]};
        j["criteria"].push_back(std::move(jc));
    }
    j["rules"] = nlohmann::ordered_json::array();
    for (const DecisionRule& r : rs.rules) {
        nlohmann::ordered_json jr;
        nlohmann::ordered_json when = nlohmann::ordered_json::object();
        for (std::size_t k = 0; k < r.require.size(); ++k)
            if (r.require[k] != -1) when[rs.criteria[k].id] = r.require[k] == 1;
        if (!when.empty()) jr["when"] = std::move(when);
        jr["label"] = r.label;
        j["rules"].push_back(std::move(jr));
    }
    return j;
}

inline RuleSet load_ruleset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open ruleset file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("ruleset file " + path + ": " + e.what());
    }
    return ruleset_from_json(j);
}

inline nlohmann::ordered_json search_result_to_json(const RuleSet& rs,
                                                    const ThresholdSearchResult& r,
                                                    std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["exercise_id"] = rs.exercise_id;
    j["seed"] = seed;
    j["budget"] = r.budget;
    j["best_index"] = r.best_index;
    j["score"] = r.score;
    j["thresholds"] = nlohmann::ordered_json::object();
    j["search_ranges"] = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < rs.criteria.size(); ++k) {
        j["thresholds"][rs.criteria[k].id] = r.thresholds[k];
        j["search_ranges"][rs.criteria[k].id] = {r.ranges[k][0], r.ranges[k][1]};
    }
    return j;
}

}  // namespace imuaug
