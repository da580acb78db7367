#pragma once

// Subcommand implementations behind the imuaug binary.  Each cmd_* function
// does the work and reports failure by throwing; the binary maps exception
// classes to exit codes (1 usage/config, 2 data, 3 broken invariant).
//
// Output directories: an explicit --out always wins.  Otherwise results land
// under $IMUAUG_OUT_ROOT, or the current directory when that is unset.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "imuaug/augmentation.hpp"
#include "imuaug/calibration.hpp"
#include "imuaug/cnn.hpp"
#include "imuaug/dataset.hpp"
#include "imuaug/error.hpp"
#include "imuaug/experiment.hpp"
#include "imuaug/labeling.hpp"
#include "imuaug/rotation.hpp"
#include "imuaug/skeleton.hpp"

namespace imuaug {

inline std::string resolve_out_dir(const std::string& out, const std::string& name) {
    if (!out.empty()) return out;
    const char* root = std::getenv("IMUAUG_OUT_ROOT");
    return (std::filesystem::path(root ? root : ".") / name).string();
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

inline nlohmann::json read_json(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw DataError(std::string("cannot open ") + what + ": " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string(what) + " " + path + ": " + e.what());
    }
}

}  // namespace detail

// ---- preprocess -----------------------------------------------------------

// Raw manifests share the dataset manifest layout but carry "format": "raw"
// and point at six-axis CSVs: frame,<seg>_gx,_gy,_gz,<seg>_ax,_ay,_az per
// segment, gyro in rad/s and accel in m/s^2 at the manifest sample rate.
namespace detail {

inline std::vector<std::vector<ImuSample>> load_raw_csv(const std::string& path,
                                                        const std::vector<std::string>& segments,
                                                        double sample_rate) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open raw file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty raw file: " + path);
    std::string expected = "frame";
    for (const std::string& s : segments)
        expected += "," + s + "_gx," + s + "_gy," + s + "_gz," + s + "_ax," + s + "_ay," + s + "_az";
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected) throw DataError(path + ": header does not match the manifest segments");

    const double dt = 1.0 / sample_rate;
    std::vector<std::vector<ImuSample>> streams(segments.size());
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 1 + 6 * segments.size())
            throw DataError(path + ": row " + std::to_string(row) + ": expected " +
                            std::to_string(1 + 6 * segments.size()) + " columns, got " +
                            std::to_string(cells.size()));
        for (std::size_t s = 0; s < segments.size(); ++s) {
            ImuSample sample;
            sample.dt = dt;
            try {
                sample.gyro = {std::stod(cells[1 + 6 * s]), std::stod(cells[2 + 6 * s]),
                               std::stod(cells[3 + 6 * s])};
                sample.accel = {std::stod(cells[4 + 6 * s]), std::stod(cells[5 + 6 * s]),
                                std::stod(cells[6 + 6 * s])};
            } catch (const std::exception&) {
                throw DataError(path + ": row " + std::to_string(row) + ": bad number");
            }
            streams[s].push_back(sample);
        }
        ++row;
    }
    return streams;
}

}  // namespace detail

struct PreprocessOptions {
    std::string manifest;
    std::string model_file;  // dataset segments must exist in this skeleton
    std::string out_dir;
    double beta = 0.033;
};

inline void cmd_preprocess(const PreprocessOptions& opt) {
    namespace fs = std::filesystem;
    const nlohmann::json manifest = detail::read_json(opt.manifest, "manifest");
    const bool raw = manifest.value("format", "orientation") == "raw";

    Dataset ds;
    if (raw) {
        try {
            ds.exercise_id = manifest.at("exercise_id").get<std::string>();
            ds.segments = manifest.at("segments").get<std::vector<std::string>>();
            ds.sample_rate = manifest.at("sample_rate").get<double>();
            if (manifest.contains("calibration"))
                for (const auto& [seg, jc] : manifest["calibration"].items()) {
                    CalibrationWindow win;
                    win.begin = jc.at("window").at(0).get<std::size_t>();
                    win.end = jc.at("window").at(1).get<std::size_t>();
                    if (jc.contains("reference"))
                        win.reference = {jc["reference"].at(0).get<double>(),
                                         jc["reference"].at(1).get<double>(),
                                         jc["reference"].at(2).get<double>(),
                                         jc["reference"].at(3).get<double>()};
                    ds.calibration[seg] = win;
                }
            const fs::path base = fs::path(opt.manifest).parent_path();
            for (const auto& jr : manifest.at("repetitions")) {
                Repetition rep;
                rep.repetition_id = jr.at("id").get<std::string>();
                rep.subject_id = jr.at("subject").get<std::string>();
                rep.exercise_id = ds.exercise_id;
                rep.label = jr.at("label").get<int>();
                const auto streams = detail::load_raw_csv(
                    (base / jr.at("file").get<std::string>()).string(), ds.segments, ds.sample_rate);
                for (std::size_t s = 0; s < ds.segments.size(); ++s)
                    rep.trajectories.push_back(
                        estimate_orientation(ds.segments[s], streams[s], Quat{}, opt.beta)
                            .trajectory);
                ds.reps.push_back(std::move(rep));
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError("manifest " + opt.manifest + ": " + e.what());
        }
    } else {
        ds = load_dataset(opt.manifest);
    }

    const SkeletalModel model = load_model_file(opt.model_file);
    for (const std::string& seg : ds.segments)
        if (model.find_segment(seg) < 0)
            throw DataError("segment " + seg + " is not part of model " + opt.model_file);

    // Sensor-to-segment calibration, one offset per (repetition, segment)
    // from that repetition's static window.
    for (Repetition& rep : ds.reps)
        for (OrientationTrajectory& traj : rep.trajectories) {
            auto it = ds.calibration.find(traj.segment_id);
            if (it == ds.calibration.end())
                throw DataError("no calibration window for segment " + traj.segment_id);
            const SegmentFrameOffset off = compute_offset(traj, it->second.begin, it->second.end,
                                                          it->second.reference);
            traj = apply_offset(off, traj);
        }

    save_dataset(ds, resolve_out_dir(opt.out_dir, "preprocessed"));
}

// ---- augment --------------------------------------------------------------

struct AugmentOptions {
    std::string manifest, model_file, ruleset_file, out_dir;
    std::string distributions_file;  // empty = estimate from the dataset
    int per_class = 30;
    std::uint64_t seed = 0;
    int max_attempts = kDefaultMaxAttempts;
};

inline void cmd_augment(const AugmentOptions& opt) {
    if (opt.per_class < 1) throw ConfigError("augment: per-class count must be >= 1");
    const Dataset ds = load_dataset(opt.manifest);
    const SkeletalModel model = load_model_file(opt.model_file);
    const RuleSet rules = load_ruleset_file(opt.ruleset_file);
    const std::vector<AugmentationDistribution> dists =
        opt.distributions_file.empty() ? estimate_distributions(ds.reps)
                                       : load_distributions_file(opt.distributions_file);

    const GenerationResult gen =
        generate_set(ds.reps, dists, model, rules, opt.per_class, opt.seed, opt.max_attempts);

    Dataset out;
    out.exercise_id = ds.exercise_id;
    out.sample_rate = ds.sample_rate;
    for (const Segment& s : model.segments) out.segments.push_back(s.id);
    for (const AugmentedRepetition& ar : gen.accepted) out.reps.push_back(ar.rep);

    const std::string dir = resolve_out_dir(opt.out_dir, "augmented");
    save_dataset(out, dir);
    save_distributions_file(dists, dir + "/distributions.json");
    detail::write_text(dir + "/report.json", report_to_json(gen.report).dump(2) + "\n");
}

// ---- optimize -------------------------------------------------------------

struct OptimizeOptions {
    std::string manifest, model_file, ruleset_file, out_dir;
    std::uint64_t budget = 100000;
    std::uint64_t seed = 0;
};

inline void cmd_optimize(const OptimizeOptions& opt) {
    if (opt.budget < 1) throw ConfigError("optimize: budget must be >= 1");
    const Dataset ds = load_dataset(opt.manifest);
    const SkeletalModel model = load_model_file(opt.model_file);
    const RuleSet rules = load_ruleset_file(opt.ruleset_file);

    std::vector<KinematicMetrics> metrics;
    std::vector<int> labels;
    for (const Repetition& rep : ds.reps) {
        const IkResult ik = run_ik(model, rep.trajectories);
        metrics.push_back(extract_metrics(model, ik.poses, model.metrics));
        labels.push_back(rep.label);
    }

    std::mt19937_64 rng(opt.seed);
    const ThresholdSearchResult res = optimize_thresholds(rules, metrics, labels, opt.budget, rng);
    const RuleSet tuned = apply_thresholds(rules, res.thresholds);

    nlohmann::ordered_json js;
    js["score"] = res.score;
    js["budget"] = res.budget;
    js["best_index"] = res.best_index;
    js["seed"] = opt.seed;
    js["thresholds"] = res.thresholds;
    js["ranges"] = res.ranges;

    const std::string dir = resolve_out_dir(opt.out_dir, "optimized");
    std::filesystem::create_directories(dir);
    detail::write_text(dir + "/ruleset.json", ruleset_to_json(tuned).dump(2) + "\n");
    detail::write_text(dir + "/search.json", js.dump(2) + "\n");
    std::cout << "optimize: GM_F1 " << res.score << " at candidate " << res.best_index << "\n";
}

// ---- experiment -----------------------------------------------------------

struct ExperimentOptions {
    std::string config_file, out_dir;
    std::string schema_file;  // optional: validate the report before writing
    std::string scenario;     // optional override of the config's scenario
    bool has_seed = false;
    std::uint64_t seed = 0;
};

inline void cmd_experiment(const ExperimentOptions& opt) {
    ExperimentConfig cfg =
        experiment_config_from_json(detail::read_json(opt.config_file, "experiment config"));
    if (!opt.scenario.empty()) cfg.scenario = scenario_from_string(opt.scenario);
    if (opt.has_seed) cfg.seed = opt.seed;

    const ExperimentReport report = run_experiment(cfg);
    const nlohmann::ordered_json j = report_to_json(report);
    if (!opt.schema_file.empty()) validate_report_json(j, opt.schema_file);

    const std::string dir = resolve_out_dir(opt.out_dir, "experiment");
    std::filesystem::create_directories(dir);
    detail::write_text(dir + "/report.json", j.dump(2) + "\n");
    // Timing stays out of the report so reruns stay byte-identical.
    std::cout << "experiment " << to_string(report.scenario) << ": macro F1 "
              << report.macro_f1_mean << " +/- " << report.macro_f1_std << " over "
              << report.folds.size() << " folds in " << report.runtime_seconds << " s\n";
}

// ---- finetune -------------------------------------------------------------

struct FinetuneOptions {
    std::string checkpoint_in, manifest, out_dir;
    std::string val_manifest;  // empty = the tuning set doubles as validation
    FinetuneConfig cfg;
};

inline void cmd_finetune(const FinetuneOptions& opt) {
    const ModelState<float> base = load_checkpoint<float>(opt.checkpoint_in);
    const std::size_t time_steps = static_cast<std::size_t>(base.cols);

    const Dataset tune_ds = load_dataset(opt.manifest);
    std::vector<InputMatrix> tune_m;
    for (const Repetition& r : tune_ds.reps) tune_m.push_back(build_input_matrix(r, time_steps));
    std::vector<InputMatrix> val_m = tune_m;
    if (!opt.val_manifest.empty()) {
        val_m.clear();
        for (const Repetition& r : load_dataset(opt.val_manifest).reps)
            val_m.push_back(build_input_matrix(r, time_steps));
    }

    const ModelState<float> tuned = finetune(base, tune_m, val_m, opt.cfg);

    const std::string dir = resolve_out_dir(opt.out_dir, "finetuned");
    std::filesystem::create_directories(dir);
    save_checkpoint(tuned, dir + "/checkpoint.bin");
    save_history_csv(tuned.history, dir + "/history.csv");
}

// ---- export-features ------------------------------------------------------

struct ExportFeaturesOptions {
    std::string manifest, out_dir;
    std::size_t time_steps = 256;
};

// features.csv is a pure numeric matrix (no header): one row per repetition
// in manifest order, 4 * segments * time_steps columns (the flattened input
// matrix).  labels.csv carries the per-row metadata.
inline void cmd_export_features(const ExportFeaturesOptions& opt) {
    const Dataset ds = load_dataset(opt.manifest);
    const std::string dir = resolve_out_dir(opt.out_dir, "features");
    std::filesystem::create_directories(dir);

    std::ofstream feat(dir + "/features.csv");
    if (!feat) throw DataError("cannot write " + dir + "/features.csv");
    std::ofstream labels(dir + "/labels.csv");
    if (!labels) throw DataError("cannot write " + dir + "/labels.csv");
    labels << "repetition_id,subject_id,label\n";
    for (const Repetition& rep : ds.reps) {
        const InputMatrix m = build_input_matrix(rep, opt.time_steps);
        for (std::size_t i = 0; i < m.data.size(); ++i) {
            if (i) feat << ',';
            feat << detail::format_g17(m.data[i]);
        }
        feat << '\n';
        labels << rep.repetition_id << ',' << rep.subject_id << ',' << rep.label << '\n';
    }
}

// ---- synth ----------------------------------------------------------------

struct SynthOptions {
    std::string model_file, ruleset_file, spec_file, out_dir;
    int n = 210;
    std::uint64_t seed = 0;
};

inline void cmd_synth(const SynthOptions& opt) {
    if (opt.n < 1) throw ConfigError("synth: n must be >= 1");
    const SkeletalModel model = load_model_file(opt.model_file);
    const RuleSet rules = load_ruleset_file(opt.ruleset_file);
    const CorpusSpec spec = load_corpus_spec_file(opt.spec_file);

    Dataset ds;
    ds.exercise_id = spec.exercise_id;
    ds.sample_rate = spec.sample_rate;
    for (const Segment& s : model.segments) ds.segments.push_back(s.id);
    ds.reps = synthesize_corpus(model, rules, spec, opt.n, opt.seed);
    save_dataset(ds, resolve_out_dir(opt.out_dir, "corpus"));
}

}  // namespace imuaug
