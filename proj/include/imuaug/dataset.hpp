#pragma once

// Dataset model and plumbing: manifest + CSV storage, split construction
// (stratified k-fold, leave-one-subject-out), oversampling, classifier input
// assembly, and the synthetic ground-truth corpus generator that stands in
// for the private recordings.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "imuaug/error.hpp"
#include "imuaug/labeling.hpp"
#include "imuaug/rotation.hpp"
#include "imuaug/skeleton.hpp"
#include "imuaug/util.hpp"

namespace imuaug {

struct Repetition {
    std::string repetition_id;
    std::string subject_id;
    std::string exercise_id;
    int label = 0;  // 1..3
    std::vector<OrientationTrajectory> trajectories;  // manifest segment order
    std::string source = "real";                      // "real" | "augmented"
    std::string source_repetition_id;                 // provenance when augmented
    std::vector<int> rater_labels;
};

struct CalibrationWindow {
    std::size_t begin = 0;
    std::size_t end = 0;
    Quat reference{};
};

struct Dataset {
    std::string exercise_id;
    std::vector<std::string> segments;
    double sample_rate = 0.0;
    std::map<std::string, CalibrationWindow> calibration;  // optional, per segment
    std::vector<Repetition> reps;
};

// ---- storage --------------------------------------------------------------
//
// One manifest JSON next to one CSV per repetition.  CSV columns: frame
// index, then w,x,y,z per segment in manifest order; 17 significant digits
// so quaternions round-trip bit-exactly.

namespace detail {

inline std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void save_repetition_csv(const Repetition& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write repetition file: " + path);
    out << "frame";
    for (const auto& traj : rep.trajectories)
        out << "," << traj.segment_id << "_w," << traj.segment_id << "_x," << traj.segment_id
            << "_y," << traj.segment_id << "_z";
    out << "\n";
    const std::size_t len = rep.trajectories.empty() ? 0 : rep.trajectories[0].samples.size();
    for (std::size_t t = 0; t < len; ++t) {
        out << t;
        for (const auto& traj : rep.trajectories) {
            const Quat& q = traj.samples[t];
            out << "," << detail::format_g17(q.w) << "," << detail::format_g17(q.x) << ","
                << detail::format_g17(q.y) << "," << detail::format_g17(q.z);
        }
        out << "\n";
    }
}

inline std::vector<OrientationTrajectory> load_repetition_csv(
    const std::string& path, const std::vector<std::string>& segments, double sample_rate) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open repetition file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty repetition file: " + path);
    std::vector<OrientationTrajectory> trajs(segments.size());
    for (std::size_t s = 0; s < segments.size(); ++s) {
        trajs[s].segment_id = segments[s];
        trajs[s].sample_rate = sample_rate;
    }
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 1 + 4 * segments.size())
            throw DataError(path + ": row " + std::to_string(row) + ": expected " +
                            std::to_string(1 + 4 * segments.size()) + " columns, got " +
                            std::to_string(cells.size()));
        for (std::size_t s = 0; s < segments.size(); ++s) {
            Quat q;
            try {
                q.w = std::stod(cells[1 + 4 * s]);
                q.x = std::stod(cells[2 + 4 * s]);
                q.y = std::stod(cells[3 + 4 * s]);
                q.z = std::stod(cells[4 + 4 * s]);
            } catch (const std::exception&) {
                throw DataError(path + ": row " + std::to_string(row) + ": bad number");
            }
            if (std::abs(norm(q) - 1.0) > kUnitNormTol)
                throw DataError(path + ": row " + std::to_string(row) + ": segment " +
                                segments[s] + ": quaternion is not unit length");
            trajs[s].samples.push_back(q);
        }
        ++row;
    }
    return trajs;
}

inline void save_dataset(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "reps");
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["exercise_id"] = ds.exercise_id;
    j["segments"] = ds.segments;
    j["sample_rate"] = ds.sample_rate;
    if (!ds.calibration.empty()) {
        j["calibration"] = nlohmann::ordered_json::object();
        for (const auto& [seg, win] : ds.calibration) {
            j["calibration"][seg] = {
                {"window", {win.begin, win.end}},
                {"reference", {win.reference.w, win.reference.x, win.reference.y, win.reference.z}}};
        }
    }
    j["repetitions"] = nlohmann::ordered_json::array();
    for (const Repetition& rep : ds.reps) {
        if (rep.trajectories.size() != ds.segments.size())
            throw InvalidArgument("save_dataset: repetition " + rep.repetition_id +
                                  " segment count mismatch");
        const std::string file = "reps/" + rep.repetition_id + ".csv";
        save_repetition_csv(rep, (fs::path(dir) / file).string());
        nlohmann::ordered_json jr;
        jr["id"] = rep.repetition_id;
        jr["subject"] = rep.subject_id;
        jr["label"] = rep.label;
        jr["source"] = rep.source;
        if (!rep.source_repetition_id.empty()) jr["source_repetition_id"] = rep.source_repetition_id;
        if (!rep.rater_labels.empty()) jr["rater_labels"] = rep.rater_labels;
        jr["file"] = file;
        j["repetitions"].push_back(std::move(jr));
    }
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw DataError("cannot write manifest in " + dir);
    out << j.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest: " + manifest_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + manifest_path + ": " + e.what());
    }
    try {
        if (j.at("schema_version").get<int>() != 1)
            throw DataError("manifest " + manifest_path + ": unsupported schema_version");
        Dataset ds;
        ds.exercise_id = j.at("exercise_id").get<std::string>();
        ds.segments = j.at("segments").get<std::vector<std::string>>();
        ds.sample_rate = j.at("sample_rate").get<double>();
        if (j.contains("calibration"))
            for (const auto& [seg, jc] : j["calibration"].items()) {
                CalibrationWindow win;
                win.begin = jc.at("window").at(0).get<std::size_t>();
                win.end = jc.at("window").at(1).get<std::size_t>();
                const auto& r = jc.at("reference");
                win.reference = {r.at(0).get<double>(), r.at(1).get<double>(),
                                 r.at(2).get<double>(), r.at(3).get<double>()};
                ds.calibration[seg] = win;
            }
        const fs::path base = fs::path(manifest_path).parent_path();
        for (const auto& jr : j.at("repetitions")) {
            Repetition rep;
            rep.repetition_id = jr.at("id").get<std::string>();
            rep.subject_id = jr.at("subject").get<std::string>();
            rep.exercise_id = ds.exercise_id;
            rep.label = jr.at("label").get<int>();
            if (rep.label < 1 || rep.label > kNumClasses)
                throw DataError("manifest: repetition " + rep.repetition_id + ": bad label");
            rep.source = jr.value("source", "real");
            rep.source_repetition_id = jr.value("source_repetition_id", "");
            if (jr.contains("rater_labels"))
                rep.rater_labels = jr["rater_labels"].get<std::vector<int>>();
            rep.trajectories = load_repetition_csv((base / jr.at("file").get<std::string>()).string(),
                                                   ds.segments, ds.sample_rate);
            ds.reps.push_back(std::move(rep));
        }
        return ds;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + manifest_path + ": " + e.what());
    }
}

// ---- splits ---------------------------------------------------------------

struct SplitPlan {
    std::string kind;      // "kfold" | "loso"
    int fold = -1;         // k-fold iteration index
    std::string held_out;  // LOSO subject
    std::vector<std::string> train, validation, test;  // repetition ids
};

namespace detail {

// Per-class stratified 80/20 train/validation split of the given rep indices.
inline void split_train_validation(const std::vector<const Repetition*>& pool,
                                   std::mt19937_64& rng, std::vector<std::string>* train,
                                   std::vector<std::string>* validation) {
    std::map<int, std::vector<const Repetition*>> by_class;
    for (const Repetition* r : pool) by_class[r->label].push_back(r);
    for (auto& [label, members] : by_class) {
        fisher_yates(members, rng);
        std::size_t n_val = members.size() / 5;
        if (n_val == 0 && members.size() >= 2) n_val = 1;
        for (std::size_t i = 0; i < members.size(); ++i)
            (i < n_val ? validation : train)->push_back(members[i]->repetition_id);
    }
}

}  // namespace detail

inline std::vector<SplitPlan> stratified_kfold(const std::vector<Repetition>& reps, int k,
                                               std::mt19937_64& rng) {
    if (k < 2) throw InvalidArgument("stratified_kfold: k must be >= 2");
    if (static_cast<std::size_t>(k) > reps.size())
        throw InvalidArgument("stratified_kfold: k exceeds repetition count");

    // Deal each (subject, class) group round-robin across folds.  The rotating
    // start offset spreads remainders evenly and is tracked per class: with a
    // single shared offset, one-rep cells make consecutive groups cycle
    // through the classes in lockstep with the folds, which can hand every
    // class-c rep to the same fold.
    std::map<std::pair<std::string, int>, std::vector<const Repetition*>> groups;
    for (const Repetition& r : reps) groups[{r.subject_id, r.label}].push_back(&r);
    std::vector<std::vector<const Repetition*>> folds(k);
    std::map<int, int> offsets;
    for (auto& [key, members] : groups) {
        fisher_yates(members, rng);
        int& offset = offsets[key.second];
        for (std::size_t i = 0; i < members.size(); ++i)
            folds[(offset + static_cast<int>(i)) % k].push_back(members[i]);
        offset = (offset + static_cast<int>(members.size())) % k;
    }

    std::vector<SplitPlan> plans;
    for (int i = 0; i < k; ++i) {
        SplitPlan plan;
        plan.kind = "kfold";
        plan.fold = i;
        for (const Repetition* r : folds[i]) plan.test.push_back(r->repetition_id);
        std::vector<const Repetition*> rest;
        for (int f = 0; f < k; ++f)
            if (f != i) rest.insert(rest.end(), folds[f].begin(), folds[f].end());
        detail::split_train_validation(rest, rng, &plan.train, &plan.validation);
        plans.push_back(std::move(plan));
    }
    return plans;
}

inline std::vector<SplitPlan> loso_split(const std::vector<Repetition>& reps,
                                         std::mt19937_64& rng) {
    std::set<std::string> subjects;
    for (const Repetition& r : reps) subjects.insert(r.subject_id);
    if (subjects.size() < 2) throw InvalidArgument("loso_split: need at least 2 subjects");
    std::vector<SplitPlan> plans;
    for (const std::string& held : subjects) {
        SplitPlan plan;
        plan.kind = "loso";
        plan.held_out = held;
        std::vector<const Repetition*> rest;
        for (const Repetition& r : reps)
            if (r.subject_id == held)
                plan.test.push_back(r.repetition_id);
            else
                rest.push_back(&r);
        detail::split_train_validation(rest, rng, &plan.train, &plan.validation);
        plans.push_back(std::move(plan));
    }
    return plans;
}

// A corrupted split is a broken pipeline invariant, not bad input data, so
// every violation here is an InternalError (CLI exit code 3).
inline void check_split_plan(const SplitPlan& plan, const std::vector<Repetition>& reps) {
    std::map<std::string, const Repetition*> index;
    for (const Repetition& r : reps) index[r.repetition_id] = &r;
    std::set<std::string> seen;
    auto check_subset = [&](const std::vector<std::string>& ids, bool is_test) {
        for (const std::string& id : ids) {
            auto it = index.find(id);
            if (it == index.end())
                throw InternalError("split references unknown repetition " + id);
            if (!seen.insert(id).second)
                throw InternalError("split subsets overlap at repetition " + id);
            if (plan.kind == "loso" && !is_test && it->second->subject_id == plan.held_out)
                throw InternalError("held-out subject " + plan.held_out + " leaked into training");
        }
    };
    check_subset(plan.train, false);
    check_subset(plan.validation, false);
    check_subset(plan.test, true);
}

// ---- oversampling ---------------------------------------------------------

inline std::vector<Repetition> oversample(const std::vector<Repetition>& reps,
                                          std::mt19937_64& rng) {
    std::map<int, std::vector<const Repetition*>> by_class;
    for (const Repetition& r : reps) by_class[r.label].push_back(&r);
    for (int c = 1; c <= kNumClasses; ++c)
        if (by_class[c].empty())
            throw InvalidArgument("oversample: class " + std::to_string(c) + " is empty");
    std::size_t majority = 0;
    for (const auto& [label, members] : by_class) majority = std::max(majority, members.size());
    std::vector<Repetition> out = reps;
    for (const auto& [label, members] : by_class)
        for (std::size_t i = members.size(); i < majority; ++i)
            out.push_back(*members[rng() % members.size()]);
    return out;
}

// ---- classifier input -----------------------------------------------------

struct InputMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major
    int label = 0;

    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline InputMatrix build_input_matrix(const Repetition& rep, std::size_t time_steps = 256) {
    InputMatrix m;
    m.rows = 4 * rep.trajectories.size();
    m.cols = time_steps;
    m.label = rep.label;
    m.data.resize(m.rows * m.cols);
    for (std::size_t s = 0; s < rep.trajectories.size(); ++s) {
        const OrientationTrajectory rs = resample_trajectory(rep.trajectories[s], time_steps);
        for (std::size_t t = 0; t < time_steps; ++t) {
            m.data[(4 * s + 0) * time_steps + t] = rs.samples[t].w;
            m.data[(4 * s + 1) * time_steps + t] = rs.samples[t].x;
            m.data[(4 * s + 2) * time_steps + t] = rs.samples[t].y;
            m.data[(4 * s + 3) * time_steps + t] = rs.samples[t].z;
        }
    }
    return m;
}

// ---- synthetic corpus -----------------------------------------------------
//
// Squat-style archetypes on the body models: a raised-cosine activation
// drives hip/knee/ankle/torso angles, per-subject static offsets and
// amplitude scales model participant-specific movement, per-rep intensity
// noise varies the range, and the root is re-grounded each frame so the
// lowest foot landmark sits on z = 0.  Faults are injected per class (static
// plantarflexion lifts the heels, a root shift adds lateral sway).

struct SubjectSpec {
    std::string id;
    double amp_scale = 1.0;
    std::map<std::string, Vec3> static_offsets;  // segment -> per-DoF offsets (declared order)
};

struct ClassSpec {
    int label = 0;
    double weight = 1.0;  // apportionment weight
    double hip_amp = 0.0;
    double knee_amp = 0.0;
    double ankle_amp = 0.0;
    double torso_amp = 0.0;
    double ankle_static = 0.0;  // negative = plantarflexion, lifts the heels
    double sway = 0.0;          // lateral root displacement at mid-rep, m
};

struct CorpusSpec {
    std::string exercise_id;
    double sample_rate = 50.0;
    int frames = 80;
    int frames_jitter = 0;
    double noise_std = 0.0;  // relative amplitude noise per rep
    std::vector<SubjectSpec> subjects;
    std::vector<ClassSpec> classes;
};

inline CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != 1)
            throw ConfigError("unsupported corpus spec schema_version");
        CorpusSpec spec;
        spec.exercise_id = j.at("exercise_id").get<std::string>();
        spec.sample_rate = j.value("sample_rate", 50.0);
        spec.frames = j.value("frames", 80);
        spec.frames_jitter = j.value("frames_jitter", 0);
        spec.noise_std = j.value("noise_std", 0.0);
        for (const auto& js : j.at("subjects")) {
            SubjectSpec s;
            s.id = js.at("id").get<std::string>();
            s.amp_scale = js.value("amp_scale", 1.0);
            if (js.contains("static_offsets"))
                for (const auto& [seg, jo] : js["static_offsets"].items())
                    s.static_offsets[seg] = {jo.at(0).get<double>(), jo.at(1).get<double>(),
                                             jo.at(2).get<double>()};
            spec.subjects.push_back(std::move(s));
        }
        for (const auto& jc : j.at("classes")) {
            ClassSpec c;
            c.label = jc.at("label").get<int>();
            c.weight = jc.value("weight", 1.0);
            c.hip_amp = jc.value("hip_amp", 0.0);
            c.knee_amp = jc.value("knee_amp", 0.0);
            c.ankle_amp = jc.value("ankle_amp", 0.0);
            c.torso_amp = jc.value("torso_amp", 0.0);
            c.ankle_static = jc.value("ankle_static", 0.0);
            c.sway = jc.value("sway", 0.0);
            if (c.label < 1 || c.label > kNumClasses)
                throw ConfigError("corpus spec: class label out of range");
            spec.classes.push_back(c);
        }
        if (spec.subjects.empty() || spec.classes.empty())
            throw ConfigError("corpus spec: needs subjects and classes");
        if (spec.frames < 4) throw ConfigError("corpus spec: frames too small");
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("corpus spec: ") + e.what());
    }
}

inline CorpusSpec load_corpus_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus spec: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corpus spec " + path + ": " + e.what());
    }
    return corpus_spec_from_json(j);
}

namespace detail {

struct CorpusJoints {
    int torso = -1, femur_l = -1, femur_r = -1, tibia_l = -1, tibia_r = -1, foot_l = -1,
        foot_r = -1;
};

inline CorpusJoints resolve_corpus_joints(const SkeletalModel& model) {
    CorpusJoints cj;
    auto need = [&](const char* id) {
        const int s = model.find_segment(id);
        if (s < 0) throw ConfigError(std::string("corpus model lacks segment ") + id);
        return s;
    };
    cj.torso = need("torso");
    cj.femur_l = need("femur_l");
    cj.femur_r = need("femur_r");
    cj.tibia_l = need("tibia_l");
    cj.tibia_r = need("tibia_r");
    cj.foot_l = need("foot_l");
    cj.foot_r = need("foot_r");
    if (model.ground_landmarks.empty())
        throw ConfigError("corpus model has no ground-contact landmarks");
    return cj;
}

inline std::vector<Pose> archetype_motion(const SkeletalModel& model, const CorpusJoints& cj,
                                          const SubjectSpec& subject, const ClassSpec& cls,
                                          double noise_std, int frames, std::mt19937_64& rng) {
    const double i_hip = 1.0 + noise_std * gaussian01(rng);
    const double i_knee = 1.0 + noise_std * gaussian01(rng);
    const double i_ankle = 1.0 + noise_std * gaussian01(rng);
    const double i_torso = 1.0 + noise_std * gaussian01(rng);
    const double i_sway = 1.0 + noise_std * gaussian01(rng);

    std::vector<Pose> poses;
    poses.reserve(frames);
    for (int t = 0; t < frames; ++t) {
        const double s = 0.5 * (1.0 - std::cos(2.0 * kPi * t / (frames - 1)));
        Pose p = neutral_pose(model);
        auto set_dof = [&](int seg, int dof, double value) {
            p.joint_angles[model.segments[seg].dof_offset + dof] = value;
        };
        const double hip = cls.hip_amp * subject.amp_scale * i_hip * s;
        set_dof(cj.femur_l, 2, hip);
        set_dof(cj.femur_r, 2, hip);
        const double knee = -cls.knee_amp * subject.amp_scale * i_knee * s;
        set_dof(cj.tibia_l, 0, knee);
        set_dof(cj.tibia_r, 0, knee);
        const double ankle = cls.ankle_static + cls.ankle_amp * i_ankle * s;
        set_dof(cj.foot_l, 0, ankle);
        set_dof(cj.foot_r, 0, ankle);
        set_dof(cj.torso, 2, cls.torso_amp * i_torso * s);
        for (const auto& [seg_id, off] : subject.static_offsets) {
            const int seg = model.find_segment(seg_id);
            if (seg < 0) throw ConfigError("corpus spec: static offset for unknown segment " + seg_id);
            const double vals[3] = {off.x, off.y, off.z};
            for (std::size_t d = 0; d < model.segments[seg].dofs.size() && d < 3; ++d)
                p.joint_angles[model.segments[seg].dof_offset + d] += vals[d];
        }
        clamp_pose(model, p);
        p.root_position.x = cls.sway * i_sway * s;
        ground_pose(model, p);
        poses.push_back(std::move(p));
    }
    return poses;
}

}  // namespace detail

inline std::vector<Repetition> synthesize_corpus(const SkeletalModel& model, const RuleSet& ruleset,
                                                 const CorpusSpec& spec, int n,
                                                 std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("synthesize_corpus: n must be >= 1");
    validate_ruleset(ruleset);
    const detail::CorpusJoints cj = detail::resolve_corpus_joints(model);

    // Largest-remainder apportionment of n over (subject, class) cells.
    const std::size_t cells = spec.subjects.size() * spec.classes.size();
    std::vector<int> quota(cells, 0);
    {
        double weight_sum = 0.0;
        for (const ClassSpec& c : spec.classes) weight_sum += c.weight;
        std::vector<std::pair<double, std::size_t>> remainders;
        int assigned = 0;
        for (std::size_t i = 0; i < cells; ++i) {
            const ClassSpec& c = spec.classes[i % spec.classes.size()];
            const double exact =
                static_cast<double>(n) * c.weight / (weight_sum * spec.subjects.size());
            quota[i] = static_cast<int>(exact);
            assigned += quota[i];
            remainders.push_back({exact - quota[i], i});
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int i = 0; i < n - assigned; ++i) quota[remainders[i % cells].second] += 1;
    }

    std::vector<Repetition> corpus;
    const long attempt_cap = 100L * n;
    long attempts = 0;
    for (std::size_t si = 0; si < spec.subjects.size(); ++si) {
        const SubjectSpec& subject = spec.subjects[si];
        for (std::size_t ci = 0; ci < spec.classes.size(); ++ci) {
            const ClassSpec& cls = spec.classes[ci];
            std::mt19937_64 rng(
                derive_seed(seed, "corpus:" + subject.id, static_cast<std::uint64_t>(cls.label)));
            for (int r = 0; r < quota[si * spec.classes.size() + ci]; ++r) {
                bool accepted = false;
                while (!accepted) {
                    if (++attempts > attempt_cap)
                        throw ConfigError("synthesize_corpus: archetype for subject " + subject.id +
                                          " class " + std::to_string(cls.label) +
                                          " keeps failing label agreement");
                    int frames = spec.frames;
                    if (spec.frames_jitter > 0)
                        frames += static_cast<int>(rng() % (2 * spec.frames_jitter + 1)) -
                                  spec.frames_jitter;
                    const std::vector<Pose> poses = detail::archetype_motion(
                        model, cj, subject, cls, spec.noise_std, frames, rng);
                    const KinematicMetrics km = extract_metrics(model, poses, model.metrics);
                    if (assign_label(km, ruleset).label != cls.label) continue;
                    Repetition rep;
                    rep.repetition_id =
                        subject.id + "_c" + std::to_string(cls.label) + "_r" + std::to_string(r);
                    rep.subject_id = subject.id;
                    rep.exercise_id = spec.exercise_id;
                    rep.label = cls.label;
                    rep.source = "real";
                    rep.trajectories =
                        export_consistent_orientations(model, poses, spec.sample_rate);
                    corpus.push_back(std::move(rep));
                    accepted = true;
                }
            }
        }
    }
    return corpus;
}

}  // namespace imuaug
