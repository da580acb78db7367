#include "imuaug/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <set>

#include <unistd.h>

using namespace imuaug;

namespace {

std::string scratch_dir() {
    static const std::string dir = [] {
        const auto d = std::filesystem::temp_directory_path() /
                       ("imuaug_experiment_" + std::to_string(getpid()));
        std::filesystem::remove_all(d);
        std::filesystem::create_directories(d);
        return d.string();
    }();
    return dir;
}

// One small world shared by every test: a balanced 3-subject corpus on disk
// plus a pregenerated augmented dataset derived from it (one candidate per
// source and class, 81 examples).
struct World {
    std::string real_manifest, aug_manifest, model_file, ruleset_file;
    std::vector<std::string> subjects;
};

const World& world() {
    static const World w = [] {
        World out;
        out.model_file = std::string(IMUAUG_ASSET_DIR) + "/models/body9.json";
        out.ruleset_file = std::string(IMUAUG_ASSET_DIR) + "/rulesets/squat.json";
        const SkeletalModel model = load_model_file(out.model_file);
        const RuleSet rules = load_ruleset_file(out.ruleset_file);

        CorpusSpec spec =
            load_corpus_spec_file(std::string(IMUAUG_ASSET_DIR) + "/corpora/squat_balanced.json");
        spec.subjects.resize(3);
        spec.frames = 40;
        spec.frames_jitter = 4;
        for (const SubjectSpec& s : spec.subjects) out.subjects.push_back(s.id);

        Dataset real;
        real.exercise_id = spec.exercise_id;
        real.sample_rate = spec.sample_rate;
        real.reps = synthesize_corpus(model, rules, spec, 27, 7100);
        for (const OrientationTrajectory& t : real.reps.front().trajectories)
            real.segments.push_back(t.segment_id);
        const std::string real_dir = scratch_dir() + "/real";
        save_dataset(real, real_dir);
        out.real_manifest = real_dir + "/manifest.json";

        const auto dists = estimate_distributions(real.reps);
        const GenerationResult gen = generate_set(real.reps, dists, model, rules, 1, 7200);
        Dataset aug;
        aug.exercise_id = real.exercise_id;
        aug.segments = real.segments;
        aug.sample_rate = real.sample_rate;
        for (const AugmentedRepetition& ar : gen.accepted) aug.reps.push_back(ar.rep);
        const std::string aug_dir = scratch_dir() + "/augmented";
        save_dataset(aug, aug_dir);
        out.aug_manifest = aug_dir + "/manifest.json";
        return out;
    }();
    return w;
}

// Desk-sized configuration: tiny network, 16 time steps, short training.
ExperimentConfig desk(Scenario sc) {
    ExperimentConfig cfg;
    cfg.scenario = sc;
    cfg.real_manifest = world().real_manifest;
    if (scenario_needs_augmented_dataset(sc)) cfg.augmented_manifest = world().aug_manifest;
    if (sc == Scenario::kTratrFt) {
        cfg.model_file = world().model_file;
        cfg.ruleset_file = world().ruleset_file;
    }
    cfg.aug_train = 9;
    cfg.aug_val = 3;
    cfg.aug_test = 3;
    cfg.k = 3;
    cfg.time_steps = 16;
    cfg.seed = 99;
    cfg.model = {4, 3, 16, 8, 3, 0.1, 1e-4};
    cfg.train.learning_rate = 1e-3;
    cfg.train.batch_size = 8;
    cfg.train.patience = 4;
    cfg.train.max_epochs = 6;
    cfg.finetune = {2e-4, 1e-3, 1e-5, 2, 6, 8, 0};
    cfg.ft_recorded_reps = 2;
    cfg.ft_real_per_class = 2;
    cfg.ft_aug_missing = 2;
    cfg.ft_aug_recorded = 2;
    return cfg;
}

// A hand-built LOSO plan holding out `held`, with one rep per class of the
// first remaining subject as validation.
SplitPlan manual_loso_plan(const std::string& held) {
    const Dataset real = load_dataset(world().real_manifest);
    SplitPlan plan;
    plan.kind = "loso";
    plan.held_out = held;
    std::string val_subject;
    std::set<int> val_classes;
    for (const Repetition& r : real.reps) {
        if (r.subject_id == held) {
            plan.test.push_back(r.repetition_id);
            continue;
        }
        if (val_subject.empty()) val_subject = r.subject_id;
        if (r.subject_id == val_subject && !val_classes.count(r.label)) {
            val_classes.insert(r.label);
            plan.validation.push_back(r.repetition_id);
        } else {
            plan.train.push_back(r.repetition_id);
        }
    }
    return plan;
}

void expect_aggregate_matches_folds(const ExperimentReport& r) {
    const double n = static_cast<double>(r.folds.size());
    double mean = 0.0;
    for (const FoldResult& f : r.folds) mean += f.macro_f1 / n;
    double var = 0.0;
    for (const FoldResult& f : r.folds) var += (f.macro_f1 - mean) * (f.macro_f1 - mean) / n;
    EXPECT_NEAR(r.macro_f1_mean, mean, 1e-12);
    EXPECT_NEAR(r.macro_f1_std, std::sqrt(var), 1e-12);
    ASSERT_EQ(r.class_f1_mean.size(), static_cast<std::size_t>(kNumClasses));
    for (int c = 0; c < kNumClasses; ++c) {
        double cm = 0.0;
        for (const FoldResult& f : r.folds) cm += f.class_f1[c] / n;
        EXPECT_NEAR(r.class_f1_mean[c], cm, 1e-12);
    }
}

int confusion_total(const ConfusionMatrix& m) {
    int total = 0;
    for (int r = 0; r < m.n; ++r)
        for (int c = 0; c < m.n; ++c) total += m.at(r, c);
    return total;
}

}  // namespace

TEST(Scenario, StringsRoundTripAndUnknownIsRejected) {
    for (Scenario sc : {Scenario::kTrtr, Scenario::kTatr, Scenario::kTrta, Scenario::kTrtrLoso,
                        Scenario::kTratrLoso, Scenario::kTrtrFt, Scenario::kTratrFt})
        EXPECT_EQ(scenario_from_string(to_string(sc)), sc);
    EXPECT_THROW(scenario_from_string("TRRT"), ConfigError);

    EXPECT_TRUE(scenario_needs_augmented_dataset(Scenario::kTatr));
    EXPECT_TRUE(scenario_needs_augmented_dataset(Scenario::kTratrLoso));
    EXPECT_FALSE(scenario_needs_augmented_dataset(Scenario::kTratrFt));
    EXPECT_TRUE(scenario_is_loso(Scenario::kTrtrFt));
    EXPECT_FALSE(scenario_is_loso(Scenario::kTatr));
    EXPECT_TRUE(scenario_is_ft(Scenario::kTratrFt));
    EXPECT_FALSE(scenario_is_ft(Scenario::kTratrLoso));
}

TEST(ExperimentConfigJson, RoundTripPreservesTheFields) {
    ExperimentConfig cfg = desk(Scenario::kTratrLoso);
    cfg.seed = 1234567;
    cfg.aug_max_attempts = 17;
    const auto j = experiment_config_to_json(cfg);
    const ExperimentConfig back = experiment_config_from_json(j);
    EXPECT_EQ(experiment_config_to_json(back).dump(), j.dump());
    EXPECT_EQ(back.scenario, Scenario::kTratrLoso);
    EXPECT_EQ(back.seed, 1234567u);
    EXPECT_EQ(back.aug_max_attempts, 17);
    EXPECT_EQ(back.model.conv_filters, 4);
    EXPECT_EQ(back.train.batch_size, 8);
    EXPECT_DOUBLE_EQ(back.finetune.peak_lr, 1e-3);
}

TEST(ExperimentConfigJson, ValidationCatchesMissingInputs) {
    ExperimentConfig cfg = desk(Scenario::kTatr);
    cfg.augmented_manifest.clear();
    EXPECT_THROW(validate_experiment_config(cfg), ConfigError);

    cfg = desk(Scenario::kTratrFt);
    cfg.model_file.clear();
    EXPECT_THROW(validate_experiment_config(cfg), ConfigError);

    cfg = desk(Scenario::kTrtr);
    cfg.real_manifest.clear();
    EXPECT_THROW(validate_experiment_config(cfg), ConfigError);

    cfg = desk(Scenario::kTrtr);
    cfg.k = 1;
    EXPECT_THROW(validate_experiment_config(cfg), ConfigError);

    EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"scenario", "TRTR"}}), ConfigError);
}

TEST(RunExperiment, TrtrBookkeepingIsConsistent) {
    const ExperimentReport r = run_experiment(desk(Scenario::kTrtr));
    ASSERT_EQ(r.folds.size(), 3u);
    int test_total = 0;
    for (const FoldResult& f : r.folds) {
        EXPECT_GE(f.epochs, 1);
        EXPECT_GT(f.train_size, 0);
        EXPECT_GT(f.val_size, 0);
        EXPECT_EQ(confusion_total(f.confusion), f.test_size);
        EXPECT_EQ(f.class_f1.size(), static_cast<std::size_t>(kNumClasses));
        EXPECT_EQ(f.tune_real + f.tune_aug, 0);
        EXPECT_LT(f.baseline_macro_f1, 0.0);
        test_total += f.test_size;
    }
    EXPECT_EQ(test_total, 27);  // the folds partition the corpus
    expect_aggregate_matches_folds(r);
    EXPECT_LT(r.baseline_macro_f1_mean, 0.0);
    EXPECT_GT(r.runtime_seconds, 0.0);
}

TEST(RunExperiment, SameSeedGivesByteIdenticalReports) {
    const ExperimentConfig cfg = desk(Scenario::kTrtr);
    const std::string a = report_to_json(run_experiment(cfg)).dump(2);
    const std::string b = report_to_json(run_experiment(cfg)).dump(2);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.find("runtime"), std::string::npos);
}

TEST(RunExperiment, TatrTrainsOnAugmentedExamplesOnly) {
    const ExperimentConfig cfg = desk(Scenario::kTatr);
    const ExperimentReport r = run_experiment(cfg);
    ASSERT_EQ(r.folds.size(), 3u);
    for (const FoldResult& f : r.folds) {
        EXPECT_EQ(f.train_size, cfg.aug_train);
        EXPECT_EQ(f.val_size, cfg.aug_val);
        EXPECT_EQ(f.test_size, 9);  // real fold, untouched
    }
}

TEST(RunExperiment, TrtaTestsOnAugmentedExamples) {
    const ExperimentConfig cfg = desk(Scenario::kTrta);
    const ExperimentReport r = run_experiment(cfg);
    for (const FoldResult& f : r.folds) {
        EXPECT_EQ(f.test_size, cfg.aug_test);
        EXPECT_GE(f.train_size, 12);  // oversampled real train side
    }
}

TEST(RunExperiment, LosoHoldsOutEachSubjectOnce) {
    const ExperimentReport r = run_experiment(desk(Scenario::kTrtrLoso));
    ASSERT_EQ(r.folds.size(), world().subjects.size());
    std::set<std::string> held;
    for (const FoldResult& f : r.folds) {
        held.insert(f.held_out);
        EXPECT_EQ(f.test_size, 9);
    }
    EXPECT_EQ(held, std::set<std::string>(world().subjects.begin(), world().subjects.end()));
}

TEST(RunExperiment, TratrLosoAddsTheInjectedSetsOnTop) {
    // Same seed, same corpus: the LOSO plans match, so TRATR-LOSO fold sizes
    // must exceed the plain LOSO ones by exactly the injected counts.
    const ExperimentConfig cfg = desk(Scenario::kTratrLoso);
    const ExperimentReport plain = run_experiment(desk(Scenario::kTrtrLoso));
    const ExperimentReport mixed = run_experiment(cfg);
    ASSERT_EQ(plain.folds.size(), mixed.folds.size());
    for (std::size_t i = 0; i < plain.folds.size(); ++i) {
        EXPECT_EQ(mixed.folds[i].held_out, plain.folds[i].held_out);
        EXPECT_EQ(mixed.folds[i].train_size, plain.folds[i].train_size + cfg.aug_train);
        EXPECT_EQ(mixed.folds[i].val_size, plain.folds[i].val_size + cfg.aug_val);
        EXPECT_EQ(mixed.folds[i].test_size, plain.folds[i].test_size);
    }
}

TEST(RunExperiment, TrtrFtTunesOnRecordedPlusRealExamples) {
    const ExperimentConfig cfg = desk(Scenario::kTrtrFt);
    const ExperimentReport r = run_experiment(cfg);
    ASSERT_EQ(r.folds.size(), 3u);
    for (const FoldResult& f : r.folds) {
        EXPECT_EQ(f.tune_real, cfg.ft_recorded_reps + kNumClasses * cfg.ft_real_per_class);
        EXPECT_EQ(f.tune_aug, 0);
        EXPECT_EQ(f.test_size, 9 - cfg.ft_recorded_reps);
        EXPECT_GE(f.baseline_macro_f1, 0.0);
    }
    EXPECT_GE(r.baseline_macro_f1_mean, 0.0);
}

TEST(RunExperiment, TratrFtGeneratesItsTuningExamples) {
    ExperimentConfig cfg = desk(Scenario::kTratrFt);
    cfg.splits = {manual_loso_plan(world().subjects[0])};  // one fold keeps this cheap
    const ExperimentReport r = run_experiment(cfg);
    ASSERT_EQ(r.folds.size(), 1u);
    const FoldResult& f = r.folds.front();
    EXPECT_EQ(f.held_out, world().subjects[0]);
    EXPECT_EQ(f.tune_real, cfg.ft_recorded_reps);
    EXPECT_EQ(f.tune_aug, cfg.ft_aug_recorded + (kNumClasses - 1) * cfg.ft_aug_missing);
    EXPECT_EQ(f.test_size, 9 - cfg.ft_recorded_reps);
    EXPECT_GE(f.baseline_macro_f1, 0.0);
}

TEST(RunExperiment, CorruptedSplitOverridesAreRejected) {
    ExperimentConfig cfg = desk(Scenario::kTrtrLoso);

    SplitPlan overlap = manual_loso_plan(world().subjects[0]);
    overlap.train.push_back(overlap.test.front());
    cfg.splits = {overlap};
    EXPECT_THROW(run_experiment(cfg), InternalError);

    SplitPlan leak = manual_loso_plan(world().subjects[0]);
    leak.held_out = world().subjects[1];  // now train holds that subject's reps
    cfg.splits = {leak};
    EXPECT_THROW(run_experiment(cfg), InternalError);

    SplitPlan unknown = manual_loso_plan(world().subjects[0]);
    unknown.train.push_back("ghost_rep");
    cfg.splits = {unknown};
    EXPECT_THROW(run_experiment(cfg), InternalError);
}

TEST(RunExperiment, BrokenAugmentedProvenanceIsRejected) {
    ExperimentConfig cfg = desk(Scenario::kTatr);

    Dataset aug = load_dataset(world().aug_manifest);
    aug.reps.front().source_repetition_id = "no_such_rep";
    const std::string dir1 = scratch_dir() + "/aug_bad_source";
    save_dataset(aug, dir1);
    cfg.augmented_manifest = dir1 + "/manifest.json";
    EXPECT_THROW(run_experiment(cfg), ConfigError);

    aug = load_dataset(world().aug_manifest);
    aug.reps.front().subject_id =
        aug.reps.front().subject_id == world().subjects[0] ? world().subjects[1]
                                                           : world().subjects[0];
    const std::string dir2 = scratch_dir() + "/aug_bad_subject";
    save_dataset(aug, dir2);
    cfg.augmented_manifest = dir2 + "/manifest.json";
    EXPECT_THROW(run_experiment(cfg), ConfigError);
}

TEST(ReportJson, ValidatesAgainstThePublishedSchema) {
    const std::string schema =
        std::string(IMUAUG_ASSET_DIR) + "/schemas/experiment_report.schema.json";
    ExperimentConfig cfg = desk(Scenario::kTrtrFt);
    cfg.splits = {manual_loso_plan(world().subjects[1])};
    nlohmann::ordered_json j = report_to_json(run_experiment(cfg));
    EXPECT_NO_THROW(validate_report_json(j, schema));

    nlohmann::ordered_json missing = j;
    missing.erase("aggregate");
    EXPECT_THROW(validate_report_json(missing, schema), InternalError);

    nlohmann::ordered_json wrong = j;
    wrong["scenario"] = "NOPE";
    EXPECT_THROW(validate_report_json(wrong, schema), InternalError);
}
