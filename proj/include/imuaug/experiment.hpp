#pragma once

// Experiment scenarios over real and augmented datasets: stratified k-fold
// (TRTR, TATR, TRTA) and leave-one-subject-out (TRTR-LOSO, TRATR-LOSO) splits,
// plus patient-specific fine-tuning from the LOSO baselines (TRTR-FT,
// TRATR-FT).  Every random choice is derived from the one master seed, so a
// run is a pure function of (config, datasets) and reports are byte-stable.
//
// Leakage policy: augmented examples are only injected on the side their real
// source repetition sits on (train sources feed the train set, validation
// sources the validation set, test sources a TRTA test set), and for LOSO
// scenarios nothing derived from the held-out subject may enter training.
// Violations are InternalError: they mean the harness itself is broken.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "imuaug/augmentation.hpp"
#include "imuaug/cnn.hpp"
#include "imuaug/dataset.hpp"
#include "imuaug/error.hpp"
#include "imuaug/labeling.hpp"
#include "imuaug/skeleton.hpp"
#include "imuaug/util.hpp"

namespace imuaug {

enum class Scenario { kTrtr, kTatr, kTrta, kTrtrLoso, kTratrLoso, kTrtrFt, kTratrFt };

inline std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::kTrtr: return "TRTR";
        case Scenario::kTatr: return "TATR";
        case Scenario::kTrta: return "TRTA";
        case Scenario::kTrtrLoso: return "TRTR-LOSO";
        case Scenario::kTratrLoso: return "TRATR-LOSO";
        case Scenario::kTrtrFt: return "TRTR-FT";
        case Scenario::kTratrFt: return "TRATR-FT";
    }
    throw InvalidArgument("to_string: bad scenario value");
}

inline Scenario scenario_from_string(const std::string& s) {
    for (Scenario sc : {Scenario::kTrtr, Scenario::kTatr, Scenario::kTrta, Scenario::kTrtrLoso,
                        Scenario::kTratrLoso, Scenario::kTrtrFt, Scenario::kTratrFt})
        if (to_string(sc) == s) return sc;
    throw ConfigError("unknown scenario \"" + s + "\"");
}

inline bool scenario_is_loso(Scenario s) {
    return s == Scenario::kTrtrLoso || s == Scenario::kTratrLoso || s == Scenario::kTrtrFt ||
           s == Scenario::kTratrFt;
}

inline bool scenario_is_ft(Scenario s) {
    return s == Scenario::kTrtrFt || s == Scenario::kTratrFt;
}

// TATR/TRTA consume a pregenerated augmented dataset; TRATR-LOSO injects one
// into training; TRATR-FT generates its own tuning examples instead.
inline bool scenario_needs_augmented_dataset(Scenario s) {
    return s == Scenario::kTatr || s == Scenario::kTrta || s == Scenario::kTratrLoso;
}

struct ExperimentConfig {
    Scenario scenario = Scenario::kTrtr;
    std::string real_manifest;
    std::string augmented_manifest;  // TATR / TRTA / TRATR-LOSO
    std::string model_file;          // TRATR-FT candidate generation
    std::string ruleset_file;        // TRATR-FT candidate labeling
    int aug_train = 1200;            // injected set sizes per fold
    int aug_val = 240;
    int aug_test = 240;
    int k = 5;
    std::size_t time_steps = 256;
    std::uint64_t seed = 0;
    ModelConfig model;
    TrainConfig train;        // per-fold seed is derived from `seed`
    FinetuneConfig finetune;  // likewise
    int ft_recorded_reps = 2;   // real single-class examples of the held-out subject
    int ft_real_per_class = 2;  // TRTR-FT: real examples per class from the training pool
    int ft_aug_missing = 8;     // TRATR-FT: augmented examples per missing class
    int ft_aug_recorded = 6;    // TRATR-FT: augmented examples for the recorded class
    int aug_max_attempts = kDefaultMaxAttempts;
    std::vector<SplitPlan> splits;  // optional override; audited like generated plans
};

struct FoldResult {
    int fold = 0;
    std::string held_out;  // LOSO scenarios
    int train_size = 0, val_size = 0, test_size = 0;
    int tune_real = 0, tune_aug = 0;  // FT scenarios
    int epochs = 0;
    double macro_f1 = 0.0;
    std::vector<double> class_f1;
    ConfusionMatrix confusion{kNumClasses};
    double baseline_macro_f1 = -1.0;  // FT scenarios: pre-finetuning score, else -1
};

struct ExperimentReport {
    Scenario scenario = Scenario::kTrtr;
    nlohmann::ordered_json config_echo;
    std::vector<FoldResult> folds;
    double macro_f1_mean = 0.0;
    double macro_f1_std = 0.0;  // population std over folds
    std::vector<double> class_f1_mean;
    double baseline_macro_f1_mean = -1.0;
    double runtime_seconds = 0.0;  // measured, deliberately absent from the JSON report
};

// ---- config JSON ----------------------------------------------------------

inline nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["scenario"] = to_string(cfg.scenario);
    j["real_manifest"] = cfg.real_manifest;
    if (!cfg.augmented_manifest.empty()) j["augmented_manifest"] = cfg.augmented_manifest;
    if (!cfg.model_file.empty()) j["model_file"] = cfg.model_file;
    if (!cfg.ruleset_file.empty()) j["ruleset_file"] = cfg.ruleset_file;
    j["aug_train"] = cfg.aug_train;
    j["aug_val"] = cfg.aug_val;
    j["aug_test"] = cfg.aug_test;
    j["k"] = cfg.k;
    j["time_steps"] = cfg.time_steps;
    j["seed"] = cfg.seed;
    j["model"] = {{"conv_filters", cfg.model.conv_filters}, {"kernel", cfg.model.kernel},
                  {"dense1", cfg.model.dense1},             {"dense2", cfg.model.dense2},
                  {"num_classes", cfg.model.num_classes},   {"dropout_rate", cfg.model.dropout_rate},
                  {"l2", cfg.model.l2}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"batch_size", cfg.train.batch_size},
                  {"patience", cfg.train.patience},
                  {"max_epochs", cfg.train.max_epochs}};
    j["finetune"] = {{"start_lr", cfg.finetune.start_lr},
                     {"peak_lr", cfg.finetune.peak_lr},
                     {"end_lr", cfg.finetune.end_lr},
                     {"peak_epoch", cfg.finetune.peak_epoch},
                     {"total_epochs", cfg.finetune.total_epochs},
                     {"batch_size", cfg.finetune.batch_size}};
    j["ft_recorded_reps"] = cfg.ft_recorded_reps;
    j["ft_real_per_class"] = cfg.ft_real_per_class;
    j["ft_aug_missing"] = cfg.ft_aug_missing;
    j["ft_aug_recorded"] = cfg.ft_aug_recorded;
    j["aug_max_attempts"] = cfg.aug_max_attempts;
    return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        cfg.scenario = scenario_from_string(j.at("scenario").get<std::string>());
        cfg.real_manifest = j.at("real_manifest").get<std::string>();
        cfg.augmented_manifest = j.value("augmented_manifest", "");
        cfg.model_file = j.value("model_file", "");
        cfg.ruleset_file = j.value("ruleset_file", "");
        cfg.aug_train = j.value("aug_train", cfg.aug_train);
        cfg.aug_val = j.value("aug_val", cfg.aug_val);
        cfg.aug_test = j.value("aug_test", cfg.aug_test);
        cfg.k = j.value("k", cfg.k);
        cfg.time_steps = j.value("time_steps", cfg.time_steps);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("model")) {
            const auto& m = j["model"];
            cfg.model.conv_filters = m.value("conv_filters", cfg.model.conv_filters);
            cfg.model.kernel = m.value("kernel", cfg.model.kernel);
            cfg.model.dense1 = m.value("dense1", cfg.model.dense1);
            cfg.model.dense2 = m.value("dense2", cfg.model.dense2);
            cfg.model.num_classes = m.value("num_classes", cfg.model.num_classes);
            cfg.model.dropout_rate = m.value("dropout_rate", cfg.model.dropout_rate);
            cfg.model.l2 = m.value("l2", cfg.model.l2);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            cfg.train.patience = t.value("patience", cfg.train.patience);
            cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
        }
        if (j.contains("finetune")) {
            const auto& f = j["finetune"];
            cfg.finetune.start_lr = f.value("start_lr", cfg.finetune.start_lr);
            cfg.finetune.peak_lr = f.value("peak_lr", cfg.finetune.peak_lr);
            cfg.finetune.end_lr = f.value("end_lr", cfg.finetune.end_lr);
            cfg.finetune.peak_epoch = f.value("peak_epoch", cfg.finetune.peak_epoch);
            cfg.finetune.total_epochs = f.value("total_epochs", cfg.finetune.total_epochs);
            cfg.finetune.batch_size = f.value("batch_size", cfg.finetune.batch_size);
        }
        cfg.ft_recorded_reps = j.value("ft_recorded_reps", cfg.ft_recorded_reps);
        cfg.ft_real_per_class = j.value("ft_real_per_class", cfg.ft_real_per_class);
        cfg.ft_aug_missing = j.value("ft_aug_missing", cfg.ft_aug_missing);
        cfg.ft_aug_recorded = j.value("ft_aug_recorded", cfg.ft_aug_recorded);
        cfg.aug_max_attempts = j.value("aug_max_attempts", cfg.aug_max_attempts);
        if (j.contains("splits"))
            for (const auto& js : j["splits"]) {
                SplitPlan plan;
                plan.kind = js.value("kind", scenario_is_loso(cfg.scenario) ? "loso" : "kfold");
                plan.fold = js.value("fold", -1);
                plan.held_out = js.value("held_out", "");
                plan.train = js.at("train").get<std::vector<std::string>>();
                plan.validation = js.at("validation").get<std::vector<std::string>>();
                plan.test = js.at("test").get<std::vector<std::string>>();
                cfg.splits.push_back(std::move(plan));
            }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    return cfg;
}

inline void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.real_manifest.empty()) throw ConfigError("experiment config: real_manifest is required");
    if (scenario_needs_augmented_dataset(cfg.scenario) && cfg.augmented_manifest.empty())
        throw ConfigError("experiment config: scenario " + to_string(cfg.scenario) +
                          " requires augmented_manifest");
    if (cfg.scenario == Scenario::kTratrFt && (cfg.model_file.empty() || cfg.ruleset_file.empty()))
        throw ConfigError("experiment config: TRATR-FT requires model_file and ruleset_file");
    if (!scenario_is_loso(cfg.scenario) && cfg.k < 2)
        throw ConfigError("experiment config: k must be >= 2");
    if (cfg.aug_train < 1 || cfg.aug_val < 1 || cfg.aug_test < 1)
        throw ConfigError("experiment config: augmented set sizes must be positive");
    if (cfg.time_steps < 2) throw ConfigError("experiment config: time_steps must be >= 2");
    if (cfg.ft_recorded_reps < 1 || cfg.ft_real_per_class < 0 || cfg.ft_aug_missing < 0 ||
        cfg.ft_aug_recorded < 0)
        throw ConfigError("experiment config: bad fine-tuning counts");
}

// ---- composition helpers --------------------------------------------------

namespace detail {

inline std::vector<const Repetition*> resolve_ids(
    const std::vector<std::string>& ids, const std::map<std::string, const Repetition*>& index) {
    std::vector<const Repetition*> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) out.push_back(index.at(id));
    return out;
}

inline std::vector<Repetition> copy_reps(const std::vector<const Repetition*>& ptrs) {
    std::vector<Repetition> out;
    out.reserve(ptrs.size());
    for (const Repetition* p : ptrs) out.push_back(*p);
    return out;
}

// Pick `total` augmented repetitions whose sources lie in `allowed_sources`,
// split evenly across classes (largest remainder, low class first) and spread
// round-robin across source subjects inside each class.
inline std::vector<Repetition> select_augmented(const std::vector<Repetition>& pool,
                                                const std::set<std::string>& allowed_sources,
                                                int total, std::mt19937_64& rng,
                                                const std::string& side) {
    std::array<int, kNumClasses> quota{};
    for (int c = 0; c < kNumClasses; ++c) quota[c] = total / kNumClasses;
    for (int c = 0; c < total % kNumClasses; ++c) quota[c] += 1;

    // class -> subject -> candidates, all in deterministic map order
    std::map<int, std::map<std::string, std::vector<const Repetition*>>> by_class;
    for (const Repetition& r : pool)
        if (allowed_sources.count(r.source_repetition_id))
            by_class[r.label][r.subject_id].push_back(&r);

    std::vector<Repetition> out;
    out.reserve(total);
    for (int cls = 1; cls <= kNumClasses; ++cls) {
        auto& subjects = by_class[cls];
        std::vector<std::vector<const Repetition*>> pools;
        for (auto& [subject, members] : subjects) {
            fisher_yates(members, rng);
            pools.push_back(members);
        }
        int available = 0;
        for (const auto& p : pools) available += static_cast<int>(p.size());
        if (available < quota[cls - 1])
            throw InsufficientData("augmented pool for class " + std::to_string(cls) + " on the " +
                                   side + " side has " + std::to_string(available) +
                                   " candidates; need " + std::to_string(quota[cls - 1]));
        int taken = 0;
        for (std::size_t round = 0; taken < quota[cls - 1]; ++round)
            for (std::size_t s = 0; s < pools.size() && taken < quota[cls - 1]; ++s)
                if (round < pools[s].size()) {
                    out.push_back(*pools[s][round]);
                    ++taken;
                }
    }
    return out;
}

// The harness-level leakage audit.  `allowed` is the id set of the real-side
// split the examples were injected next to.
inline void audit_injected(const std::vector<Repetition>& set, const std::set<std::string>& allowed,
                           const std::string& held_out, const std::string& side) {
    for (const Repetition& r : set) {
        if (r.source != "augmented") continue;
        if (!allowed.count(r.source_repetition_id))
            throw InternalError("augmented repetition " + r.repetition_id + " in the " + side +
                                " set has source " + r.source_repetition_id +
                                " outside the allowed split side");
        if (!held_out.empty() && r.subject_id == held_out)
            throw InternalError("augmented repetition " + r.repetition_id + " of held-out subject " +
                                held_out + " leaked into the " + side + " set");
    }
}

inline std::vector<InputMatrix> to_matrices(const std::vector<Repetition>& reps,
                                            std::size_t time_steps) {
    std::vector<InputMatrix> out;
    out.reserve(reps.size());
    for (const Repetition& r : reps) out.push_back(build_input_matrix(r, time_steps));
    return out;
}

inline void fill_fold_metrics(FoldResult& fr, const Evaluation& ev) {
    fr.macro_f1 = ev.macro_f1;
    fr.class_f1 = ev.f1;
    fr.confusion = ev.confusion;
}

// Lowest class label the subject recorded at least `count` times; the first
// `count` repetitions of it (id order) become the patient's recorded examples.
inline std::vector<const Repetition*> recorded_examples(
    const std::vector<const Repetition*>& subject_reps, int count, const std::string& subject) {
    std::map<int, std::vector<const Repetition*>> by_class;
    for (const Repetition* r : subject_reps) by_class[r->label].push_back(r);
    for (auto& [cls, members] : by_class) {
        if (static_cast<int>(members.size()) < count) continue;
        std::sort(members.begin(), members.end(),
                  [](const Repetition* a, const Repetition* b) {
                      return a->repetition_id < b->repetition_id;
                  });
        members.resize(count);
        return members;
    }
    throw InsufficientData("held-out subject " + subject + " has no class with " +
                           std::to_string(count) + " repetitions to record");
}

}  // namespace detail

// ---- the harness ----------------------------------------------------------

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    validate_experiment_config(cfg);

    const Dataset real = load_dataset(cfg.real_manifest);
    if (real.reps.empty()) throw DataError("experiment: real dataset is empty");

    Dataset augmented;
    if (scenario_needs_augmented_dataset(cfg.scenario)) {
        augmented = load_dataset(cfg.augmented_manifest);
        if (augmented.segments != real.segments)
            throw ConfigError("experiment: augmented dataset segments differ from the real ones");
        std::map<std::string, const Repetition*> real_ids;
        for (const Repetition& r : real.reps) real_ids[r.repetition_id] = &r;
        for (const Repetition& r : augmented.reps) {
            if (r.source != "augmented" || r.source_repetition_id.empty())
                throw ConfigError("experiment: repetition " + r.repetition_id +
                                  " in the augmented dataset lacks augmentation provenance");
            auto it = real_ids.find(r.source_repetition_id);
            if (it == real_ids.end())
                throw ConfigError("experiment: augmented repetition " + r.repetition_id +
                                  " references unknown source " + r.source_repetition_id);
            if (it->second->subject_id != r.subject_id)
                throw ConfigError("experiment: augmented repetition " + r.repetition_id +
                                  " changed subject relative to its source");
        }
    }

    // TRATR-FT generates candidates per fold from the held-out subject's
    // recorded repetitions, against distributions fitted on everyone else.
    SkeletalModel ft_model;
    RuleSet ft_ruleset;
    if (cfg.scenario == Scenario::kTratrFt) {
        ft_model = load_model_file(cfg.model_file);
        ft_ruleset = load_ruleset_file(cfg.ruleset_file);
    }

    std::map<std::string, const Repetition*> index;
    for (const Repetition& r : real.reps) index[r.repetition_id] = &r;

    std::vector<SplitPlan> plans = cfg.splits;
    if (plans.empty()) {
        std::mt19937_64 split_rng(derive_seed(cfg.seed, "split"));
        plans = scenario_is_loso(cfg.scenario) ? loso_split(real.reps, split_rng)
                                               : stratified_kfold(real.reps, cfg.k, split_rng);
    }

    ExperimentReport report;
    report.scenario = cfg.scenario;
    report.config_echo = experiment_config_to_json(cfg);

    for (std::size_t fold = 0; fold < plans.size(); ++fold) {
        const SplitPlan& plan = plans[fold];
        check_split_plan(plan, real.reps);

        const std::set<std::string> train_ids(plan.train.begin(), plan.train.end());
        const std::set<std::string> val_ids(plan.validation.begin(), plan.validation.end());
        const std::set<std::string> test_ids(plan.test.begin(), plan.test.end());
        std::vector<const Repetition*> train_reps = detail::resolve_ids(plan.train, index);
        std::vector<const Repetition*> val_reps = detail::resolve_ids(plan.validation, index);
        std::vector<const Repetition*> test_reps = detail::resolve_ids(plan.test, index);

        FoldResult fr;
        fr.fold = static_cast<int>(fold);
        fr.held_out = plan.held_out;

        // Scenario composition.  Real train/validation are oversampled to the
        // majority class; augmented sets are balanced by construction.
        std::vector<Repetition> train_set, val_set, test_set;
        const bool real_train = cfg.scenario != Scenario::kTatr;
        if (real_train) {
            std::mt19937_64 os_rng(derive_seed(cfg.seed, "oversample", fold));
            train_set = oversample(detail::copy_reps(train_reps), os_rng);
            val_set = oversample(detail::copy_reps(val_reps), os_rng);
        }
        if (cfg.scenario == Scenario::kTatr || cfg.scenario == Scenario::kTratrLoso) {
            std::mt19937_64 sel_rng(derive_seed(cfg.seed, "inject", fold));
            std::vector<Repetition> aug_train =
                detail::select_augmented(augmented.reps, train_ids, cfg.aug_train, sel_rng, "train");
            std::vector<Repetition> aug_val =
                detail::select_augmented(augmented.reps, val_ids, cfg.aug_val, sel_rng, "validation");
            detail::audit_injected(aug_train, train_ids, plan.held_out, "train");
            detail::audit_injected(aug_val, val_ids, plan.held_out, "validation");
            for (Repetition& r : aug_train) train_set.push_back(std::move(r));
            for (Repetition& r : aug_val) val_set.push_back(std::move(r));
        }
        if (cfg.scenario == Scenario::kTrta) {
            std::mt19937_64 sel_rng(derive_seed(cfg.seed, "inject", fold));
            test_set =
                detail::select_augmented(augmented.reps, test_ids, cfg.aug_test, sel_rng, "test");
            detail::audit_injected(test_set, test_ids, plan.held_out, "test");
        } else {
            test_set = detail::copy_reps(test_reps);
        }

        // Fine-tuning: reserve the held-out subject's recorded repetitions
        // before the remaining ones become the subject's test set.
        std::vector<Repetition> tune_set;
        if (scenario_is_ft(cfg.scenario)) {
            const std::vector<const Repetition*> recorded =
                detail::recorded_examples(test_reps, cfg.ft_recorded_reps, plan.held_out);
            std::set<std::string> recorded_ids;
            for (const Repetition* r : recorded) {
                recorded_ids.insert(r->repetition_id);
                tune_set.push_back(*r);
            }
            fr.tune_real = static_cast<int>(tune_set.size());
            std::vector<Repetition> reduced;
            for (Repetition& r : test_set)
                if (!recorded_ids.count(r.repetition_id)) reduced.push_back(std::move(r));
            if (reduced.empty())
                throw InsufficientData("held-out subject " + plan.held_out +
                                       " has no repetitions left to test after recording");
            test_set = std::move(reduced);

            if (cfg.scenario == Scenario::kTrtrFt) {
                // A few real examples per class from the training pool keep
                // the tuning set multi-class.
                std::mt19937_64 pick_rng(derive_seed(cfg.seed, "ft_real", fold));
                std::map<int, std::vector<const Repetition*>> by_class;
                for (const Repetition* r : train_reps) by_class[r->label].push_back(r);
                for (int cls = 1; cls <= kNumClasses; ++cls) {
                    auto& members = by_class[cls];
                    if (static_cast<int>(members.size()) < cfg.ft_real_per_class)
                        throw InsufficientData("training pool has too few class " +
                                               std::to_string(cls) + " examples to fine-tune");
                    fisher_yates(members, pick_rng);
                    for (int i = 0; i < cfg.ft_real_per_class; ++i) {
                        tune_set.push_back(*members[i]);
                        fr.tune_real += 1;
                    }
                }
            } else {
                // TRATR-FT: augment the recorded examples toward every class;
                // distributions come from the other subjects only.
                std::vector<Repetition> dist_pool;
                for (const Repetition& r : real.reps)
                    if (r.subject_id != plan.held_out) dist_pool.push_back(r);
                const std::vector<AugmentationDistribution> dists = estimate_distributions(dist_pool);
                const int recorded_cls = recorded.front()->label;
                const std::uint64_t gen_seed = derive_seed(cfg.seed, "ft_aug", fold);
                const int n_sources = static_cast<int>(recorded.size());
                for (int s = 0; s < n_sources; ++s) {
                    std::array<int, kNumClasses> counts{};
                    for (int cls = 1; cls <= kNumClasses; ++cls) {
                        const int total = cls == recorded_cls ? cfg.ft_aug_recorded : cfg.ft_aug_missing;
                        counts[cls - 1] = total / n_sources + (s < total % n_sources ? 1 : 0);
                    }
                    const GenerationResult gen =
                        generate_set({*recorded[s]}, dists, ft_model, ft_ruleset, counts, gen_seed,
                                     cfg.aug_max_attempts);
                    for (const AugmentedRepetition& ar : gen.accepted) {
                        tune_set.push_back(ar.rep);
                        fr.tune_aug += 1;
                    }
                }
                detail::audit_injected(
                    std::vector<Repetition>(tune_set.begin() + fr.tune_real, tune_set.end()),
                    recorded_ids, "", "tune");
            }
        }

        fr.train_size = static_cast<int>(train_set.size());
        fr.val_size = static_cast<int>(val_set.size());
        fr.test_size = static_cast<int>(test_set.size());

        const std::vector<InputMatrix> train_m = detail::to_matrices(train_set, cfg.time_steps);
        const std::vector<InputMatrix> val_m = detail::to_matrices(val_set, cfg.time_steps);
        const std::vector<InputMatrix> test_m = detail::to_matrices(test_set, cfg.time_steps);

        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, "train", fold);
        const int rows = static_cast<int>(train_m.front().rows);
        const int cols = static_cast<int>(train_m.front().cols);
        ModelState<float> model =
            train(init_model<float>(cfg.model, rows, cols, derive_seed(cfg.seed, "init", fold)),
                  train_m, val_m, tc);
        fr.epochs = static_cast<int>(model.history.size());

        if (scenario_is_ft(cfg.scenario)) {
            fr.baseline_macro_f1 = evaluate(model, test_m).macro_f1;
            const std::vector<InputMatrix> tune_m = detail::to_matrices(tune_set, cfg.time_steps);
            FinetuneConfig fc = cfg.finetune;
            fc.seed = derive_seed(cfg.seed, "finetune", fold);
            model = finetune(model, tune_m, tune_m, fc);
        }
        detail::fill_fold_metrics(fr, evaluate(model, test_m));
        report.folds.push_back(std::move(fr));
    }

    // Aggregates are plain functions of the per-fold entries.
    const double n = static_cast<double>(report.folds.size());
    double mean = 0.0;
    for (const FoldResult& f : report.folds) mean += f.macro_f1;
    mean /= n;
    double var = 0.0;
    for (const FoldResult& f : report.folds) var += (f.macro_f1 - mean) * (f.macro_f1 - mean);
    report.macro_f1_mean = mean;
    report.macro_f1_std = std::sqrt(var / n);
    report.class_f1_mean.assign(kNumClasses, 0.0);
    for (const FoldResult& f : report.folds)
        for (int c = 0; c < kNumClasses; ++c) report.class_f1_mean[c] += f.class_f1[c] / n;
    if (scenario_is_ft(cfg.scenario)) {
        double bmean = 0.0;
        for (const FoldResult& f : report.folds) bmean += f.baseline_macro_f1;
        report.baseline_macro_f1_mean = bmean / n;
    }

    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// ---- report JSON ----------------------------------------------------------

// The serialized report deliberately omits the measured runtime so that two
// runs with the same config and seed are byte-identical; the CLI reports
// timing on stdout instead.
inline nlohmann::ordered_json report_to_json(const ExperimentReport& report) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["scenario"] = to_string(report.scenario);
    j["config"] = report.config_echo;
    j["folds"] = nlohmann::ordered_json::array();
    for (const FoldResult& f : report.folds) {
        nlohmann::ordered_json jf;
        jf["fold"] = f.fold;
        if (!f.held_out.empty()) jf["held_out"] = f.held_out;
        jf["train_size"] = f.train_size;
        jf["val_size"] = f.val_size;
        jf["test_size"] = f.test_size;
        if (f.tune_real + f.tune_aug > 0) {
            jf["tune_real"] = f.tune_real;
            jf["tune_aug"] = f.tune_aug;
        }
        jf["epochs"] = f.epochs;
        jf["macro_f1"] = f.macro_f1;
        jf["class_f1"] = f.class_f1;
        nlohmann::ordered_json conf = nlohmann::ordered_json::array();
        for (int r = 0; r < f.confusion.n; ++r) {
            nlohmann::ordered_json row = nlohmann::ordered_json::array();
            for (int c = 0; c < f.confusion.n; ++c) row.push_back(f.confusion.at(r, c));
            conf.push_back(std::move(row));
        }
        jf["confusion"] = std::move(conf);
        if (f.baseline_macro_f1 >= 0.0) jf["baseline_macro_f1"] = f.baseline_macro_f1;
        j["folds"].push_back(std::move(jf));
    }
    j["aggregate"]["macro_f1_mean"] = report.macro_f1_mean;
    j["aggregate"]["macro_f1_std"] = report.macro_f1_std;
    j["aggregate"]["class_f1_mean"] = report.class_f1_mean;
    if (report.baseline_macro_f1_mean >= 0.0)
        j["aggregate"]["baseline_macro_f1_mean"] = report.baseline_macro_f1_mean;
    return j;
}

// ---- schema validation ----------------------------------------------------

namespace detail {

// Minimal structural validator covering the subset of JSON Schema the report
// schema uses: type, required, properties, items, enum.
inline void validate_schema_node(const nlohmann::json& schema, const nlohmann::json& value,
                                 const std::string& where) {
    if (schema.contains("type")) {
        const std::string type = schema["type"].get<std::string>();
        const bool ok = (type == "object" && value.is_object()) ||
                        (type == "array" && value.is_array()) ||
                        (type == "string" && value.is_string()) ||
                        (type == "integer" && value.is_number_integer()) ||
                        (type == "number" && value.is_number()) ||
                        (type == "boolean" && value.is_boolean());
        if (!ok)
            throw InternalError("report schema violation at " + where + ": expected " + type);
    }
    if (schema.contains("enum")) {
        bool hit = false;
        for (const auto& v : schema["enum"]) hit = hit || v == value;
        if (!hit) throw InternalError("report schema violation at " + where + ": not in enum");
    }
    if (schema.contains("required"))
        for (const auto& req : schema["required"])
            if (!value.contains(req.get<std::string>()))
                throw InternalError("report schema violation at " + where + ": missing " +
                                    req.get<std::string>());
    if (schema.contains("properties") && value.is_object())
        for (const auto& [key, sub] : schema["properties"].items())
            if (value.contains(key)) validate_schema_node(sub, value[key], where + "." + key);
    if (schema.contains("items") && value.is_array())
        for (std::size_t i = 0; i < value.size(); ++i)
            validate_schema_node(schema["items"], value[i], where + "[" + std::to_string(i) + "]");
}

}  // namespace detail

inline void validate_report_json(const nlohmann::json& report, const std::string& schema_path) {
    std::ifstream in(schema_path);
    if (!in) throw DataError("cannot open report schema " + schema_path);
    nlohmann::json schema;
    try {
        in >> schema;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("report schema " + schema_path + ": " + e.what());
    }
    detail::validate_schema_node(schema, report, "report");
}

}  // namespace imuaug
