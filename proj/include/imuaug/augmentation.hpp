#pragma once

// Targeted orientation augmentation: estimate per-(exercise, class, segment)
// offset/range statistics from labeled repetitions, sample new parameters,
// rescale Euler tracks with e_aug = (e[t] - e[0]) * alpha + beta where
// alpha = delta / observed range, then re-project through IK and keep only
// candidates the ruleset labels as the intended class.

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imuaug/dataset.hpp"
#include "imuaug/error.hpp"
#include "imuaug/labeling.hpp"
#include "imuaug/rotation.hpp"
#include "imuaug/skeleton.hpp"
#include "imuaug/util.hpp"

namespace imuaug {

inline constexpr double kStaticAxisTol = 1e-6;  // rad; below this a range is "static"
inline constexpr int kDefaultMaxAttempts = 50;

// Euler axes are handled as (roll, pitch, yaw) packed into Vec3 (x, y, z).

struct SegmentAugStats {
    Vec3 offset_mean{}, offset_std{};  // first-frame Euler angles
    Vec3 range_mean{}, range_std{};    // per-axis max - min of the unwrapped track
};

struct AugmentationDistribution {
    std::string exercise_id;
    int class_label = 0;
    std::map<std::string, SegmentAugStats> segments;
};

struct SegmentParams {
    Vec3 beta{};   // sampled initial posture
    Vec3 delta{};  // sampled target range, >= 0
};

struct AugmentationParams {
    std::map<std::string, SegmentParams> segments;
};

// ---- estimation -----------------------------------------------------------

namespace detail {

inline void euler_offset_and_range(const OrientationTrajectory& traj, Vec3* offset, Vec3* range) {
    std::vector<EulerAngles> track;
    track.reserve(traj.samples.size());
    for (const Quat& q : traj.samples) track.push_back(quat_to_euler(q));
    track = unwrap_euler_track(track);
    *offset = {track[0].roll, track[0].pitch, track[0].yaw};
    EulerAngles lo = track[0], hi = track[0];
    for (const EulerAngles& e : track) {
        lo.roll = std::min(lo.roll, e.roll);
        lo.pitch = std::min(lo.pitch, e.pitch);
        lo.yaw = std::min(lo.yaw, e.yaw);
        hi.roll = std::max(hi.roll, e.roll);
        hi.pitch = std::max(hi.pitch, e.pitch);
        hi.yaw = std::max(hi.yaw, e.yaw);
    }
    *range = {hi.roll - lo.roll, hi.pitch - lo.pitch, hi.yaw - lo.yaw};
}

inline void mean_and_population_std(const std::vector<Vec3>& xs, Vec3* mean, Vec3* std_out) {
    Vec3 m{};
    for (const Vec3& x : xs) m += x;
    const double n = static_cast<double>(xs.size());
    m = m * (1.0 / n);
    Vec3 var{};
    for (const Vec3& x : xs) {
        const Vec3 d = x - m;
        var += {d.x * d.x, d.y * d.y, d.z * d.z};
    }
    *mean = m;
    *std_out = {std::sqrt(var.x / n), std::sqrt(var.y / n), std::sqrt(var.z / n)};
}

}  // namespace detail

inline std::vector<AugmentationDistribution> estimate_distributions(
    const std::vector<Repetition>& reps) {
    if (reps.empty()) throw InvalidArgument("estimate_distributions: no repetitions");
    std::map<std::pair<std::string, int>, std::vector<const Repetition*>> groups;
    for (const Repetition& r : reps) {
        if (r.label < 1 || r.label > kNumClasses)
            throw DataError("estimate_distributions: repetition " + r.repetition_id +
                            " has label outside 1.." + std::to_string(kNumClasses));
        groups[{r.exercise_id, r.label}].push_back(&r);
    }
    std::vector<AugmentationDistribution> out;
    for (const auto& [key, members] : groups) {
        if (members.size() < 2)
            throw InsufficientData("augmentation group (" + key.first + ", class " +
                                   std::to_string(key.second) + ") has " +
                                   std::to_string(members.size()) +
                                   " repetition(s); need at least 2");
        AugmentationDistribution dist;
        dist.exercise_id = key.first;
        dist.class_label = key.second;
        // Per segment, one (offset, range) observation per repetition.
        std::map<std::string, std::pair<std::vector<Vec3>, std::vector<Vec3>>> obs;
        for (const Repetition* rep : members)
            for (const OrientationTrajectory& traj : rep->trajectories) {
                Vec3 offset, range;
                detail::euler_offset_and_range(traj, &offset, &range);
                obs[traj.segment_id].first.push_back(offset);
                obs[traj.segment_id].second.push_back(range);
            }
        for (const auto& [segment, vecs] : obs) {
            if (vecs.first.size() != members.size())
                throw DataError("augmentation group (" + key.first + ", class " +
                                std::to_string(key.second) + "): segment " + segment +
                                " missing from some repetitions");
            SegmentAugStats stats;
            detail::mean_and_population_std(vecs.first, &stats.offset_mean, &stats.offset_std);
            detail::mean_and_population_std(vecs.second, &stats.range_mean, &stats.range_std);
            dist.segments[segment] = stats;
        }
        out.push_back(std::move(dist));
    }
    return out;
}

inline const AugmentationDistribution* find_distribution(
    const std::vector<AugmentationDistribution>& dists, const std::string& exercise_id,
    int class_label) {
    for (const AugmentationDistribution& d : dists)
        if (d.exercise_id == exercise_id && d.class_label == class_label) return &d;
    return nullptr;
}

// ---- sampling -------------------------------------------------------------

inline AugmentationParams sample_params(const AugmentationDistribution& dist,
                                        std::mt19937_64& rng) {
    AugmentationParams params;
    for (const auto& [segment, stats] : dist.segments) {
        SegmentParams sp;
        for (int a = 0; a < 3; ++a) sp.beta[a] = stats.offset_mean[a] + stats.offset_std[a] * gaussian01(rng);
        for (int a = 0; a < 3; ++a)
            sp.delta[a] = std::max(0.0, stats.range_mean[a] + stats.range_std[a] * gaussian01(rng));
        params.segments[segment] = sp;
    }
    return params;
}

// ---- trajectory modification ----------------------------------------------

struct AugmentedTrajectory {
    OrientationTrajectory trajectory;
    Vec3 alpha{1.0, 1.0, 1.0};
    std::array<bool, 3> static_axis{false, false, false};
    bool all_static = false;  // warning: offset-only result
};

inline AugmentedTrajectory augment_trajectory(const OrientationTrajectory& traj,
                                              const SegmentParams& params) {
    if (traj.samples.size() < 2)
        throw InvalidArgument("augment_trajectory: trajectory needs at least 2 samples");
    Vec3 offset, range;
    detail::euler_offset_and_range(traj, &offset, &range);

    AugmentedTrajectory out;
    for (int a = 0; a < 3; ++a) {
        if (range[a] < kStaticAxisTol) {
            // Static axis: the alpha definition would divide by ~0; keep the
            // axis unscaled and move it by the offset only.
            out.alpha[a] = 1.0;
            out.static_axis[a] = true;
        } else {
            out.alpha[a] = params.delta[a] / range[a];
        }
    }
    out.all_static = out.static_axis[0] && out.static_axis[1] && out.static_axis[2];

    std::vector<EulerAngles> track;
    track.reserve(traj.samples.size());
    for (const Quat& q : traj.samples) track.push_back(quat_to_euler(q));
    track = unwrap_euler_track(track);

    out.trajectory.segment_id = traj.segment_id;
    out.trajectory.sample_rate = traj.sample_rate;
    out.trajectory.samples.reserve(traj.samples.size());
    for (const EulerAngles& e : track) {
        EulerAngles shifted;
        shifted.roll = (e.roll - offset.x) * out.alpha.x + params.beta.x;
        shifted.pitch = (e.pitch - offset.y) * out.alpha.y + params.beta.y;
        shifted.yaw = (e.yaw - offset.z) * out.alpha.z + params.beta.z;
        out.trajectory.samples.push_back(euler_to_quat(shifted));
    }
    align_hemisphere(out.trajectory.samples);
    return out;
}

// ---- candidate generation -------------------------------------------------

struct AugmentedRepetition {
    Repetition rep;  // source = "augmented", label = intended class
    int intended_class = 0;
    std::uint64_t seed = 0;
    AugmentationParams params;
    double max_ik_residual = 0.0;
    int assigned_label = 0;
    bool any_static_axis = false;
};

struct CandidateResult {
    bool accepted = false;
    AugmentedRepetition candidate;
};

inline CandidateResult generate_candidate(const Repetition& source, int target_class,
                                          const std::vector<AugmentationDistribution>& dists,
                                          const SkeletalModel& model, const RuleSet& ruleset,
                                          std::mt19937_64& rng) {
    if (source.trajectories.empty())
        throw InvalidArgument("generate_candidate: source has no trajectories");
    const AugmentationDistribution* dist =
        find_distribution(dists, source.exercise_id, target_class);
    if (!dist)
        throw ConfigError("no augmentation distribution for (" + source.exercise_id + ", class " +
                          std::to_string(target_class) + ")");
    CandidateResult result;
    AugmentedRepetition& cand = result.candidate;
    cand.intended_class = target_class;
    cand.params = sample_params(*dist, rng);

    std::vector<OrientationTrajectory> modified;
    modified.reserve(source.trajectories.size());
    for (const OrientationTrajectory& traj : source.trajectories) {
        auto it = cand.params.segments.find(traj.segment_id);
        if (it == cand.params.segments.end())
            throw ConfigError("augmentation distribution (" + source.exercise_id + ", class " +
                              std::to_string(target_class) + ") lacks segment " + traj.segment_id);
        AugmentedTrajectory aug = augment_trajectory(traj, it->second);
        for (bool flag : aug.static_axis) cand.any_static_axis = cand.any_static_axis || flag;
        modified.push_back(std::move(aug.trajectory));
    }

    const IkResult ik = run_ik(model, modified);
    for (double r : ik.residuals) cand.max_ik_residual = std::max(cand.max_ik_residual, r);
    const double rate = source.trajectories[0].sample_rate;
    const KinematicMetrics km = extract_metrics(model, ik.poses, model.metrics);
    cand.assigned_label = assign_label(km, ruleset).label;
    result.accepted = cand.assigned_label == target_class;
    if (result.accepted) {
        cand.rep.subject_id = source.subject_id;
        cand.rep.exercise_id = source.exercise_id;
        cand.rep.label = target_class;
        cand.rep.source = "augmented";
        cand.rep.source_repetition_id = source.repetition_id;
        cand.rep.trajectories = export_consistent_orientations(model, ik.poses, rate);
    }
    return result;
}

// ---- batch generation -----------------------------------------------------

struct PairReport {
    std::string source_id;
    int class_label = 0;
    int attempts = 0;
    int accepted = 0;
};

struct GenerationReport {
    std::uint64_t master_seed = 0;
    std::array<int, kNumClasses> per_class_counts{};  // requested per target class
    int max_attempts = 0;
    std::vector<PairReport> pairs;  // (source, class) in generation order
    std::size_t total_accepted = 0;
    std::size_t total_attempts = 0;
};

struct GenerationResult {
    std::vector<AugmentedRepetition> accepted;
    GenerationReport report;
};

// Candidate seeds depend only on (master, source id, class, attempt), so the
// output is a pure function of the master seed; worker count or scheduling
// could not change any sampled value.  A zero count skips that target class.
inline GenerationResult generate_set(const std::vector<Repetition>& sources,
                                     const std::vector<AugmentationDistribution>& dists,
                                     const SkeletalModel& model, const RuleSet& ruleset,
                                     const std::array<int, kNumClasses>& per_class_counts,
                                     std::uint64_t master_seed,
                                     int max_attempts = kDefaultMaxAttempts) {
    int requested = 0;
    for (int n : per_class_counts) {
        if (n < 0) throw InvalidArgument("generate_set: negative per-class count");
        requested += n;
    }
    if (requested < 1) throw InvalidArgument("generate_set: nothing requested");
    if (max_attempts < 1) throw InvalidArgument("generate_set: max_attempts must be >= 1");
    GenerationResult result;
    result.report.master_seed = master_seed;
    result.report.per_class_counts = per_class_counts;
    result.report.max_attempts = max_attempts;
    for (const Repetition& source : sources) {
        for (int cls = 1; cls <= kNumClasses; ++cls) {
            if (per_class_counts[cls - 1] == 0) continue;
            PairReport pr;
            pr.source_id = source.repetition_id;
            pr.class_label = cls;
            int attempt = 0;
            for (int slot = 0; slot < per_class_counts[cls - 1]; ++slot) {
                bool filled = false;
                // Each slot gets up to max_attempts fresh draws.
                for (int t = 0; t < max_attempts && !filled; ++t, ++attempt) {
                    const std::uint64_t seed =
                        derive_seed(master_seed, source.repetition_id,
                                    static_cast<std::uint64_t>(cls),
                                    static_cast<std::uint64_t>(attempt));
                    std::mt19937_64 rng(seed);
                    CandidateResult cr =
                        generate_candidate(source, cls, dists, model, ruleset, rng);
                    if (cr.accepted) {
                        cr.candidate.seed = seed;
                        cr.candidate.rep.repetition_id = source.repetition_id + "_aug_c" +
                                                         std::to_string(cls) + "_" +
                                                         std::to_string(pr.accepted);
                        result.accepted.push_back(std::move(cr.candidate));
                        pr.accepted += 1;
                        filled = true;
                    }
                }
                if (!filled) break;  // this pair is not producing; report the shortfall
            }
            pr.attempts = attempt;
            result.report.total_attempts += static_cast<std::size_t>(attempt);
            result.report.pairs.push_back(std::move(pr));
        }
    }
    result.report.total_accepted = result.accepted.size();
    return result;
}

inline GenerationResult generate_set(const std::vector<Repetition>& sources,
                                     const std::vector<AugmentationDistribution>& dists,
                                     const SkeletalModel& model, const RuleSet& ruleset,
                                     int per_class_count, std::uint64_t master_seed,
                                     int max_attempts = kDefaultMaxAttempts) {
    if (per_class_count < 1) throw InvalidArgument("generate_set: per_class_count must be >= 1");
    std::array<int, kNumClasses> counts;
    counts.fill(per_class_count);
    return generate_set(sources, dists, model, ruleset, counts, master_seed, max_attempts);
}

// ---- JSON I/O -------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json vec3_json(const Vec3& v) {
    return nlohmann::ordered_json::array({v.x, v.y, v.z});
}

inline Vec3 vec3_from_json(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace detail

inline nlohmann::ordered_json distributions_to_json(
    const std::vector<AugmentationDistribution>& dists) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["distributions"] = nlohmann::ordered_json::array();
    for (const AugmentationDistribution& d : dists) {
        nlohmann::ordered_json jd;
        jd["exercise_id"] = d.exercise_id;
        jd["class_label"] = d.class_label;
        jd["segments"] = nlohmann::ordered_json::object();
        for (const auto& [segment, stats] : d.segments)
            jd["segments"][segment] = {{"offset_mean", detail::vec3_json(stats.offset_mean)},
                                       {"offset_std", detail::vec3_json(stats.offset_std)},
                                       {"range_mean", detail::vec3_json(stats.range_mean)},
                                       {"range_std", detail::vec3_json(stats.range_std)}};
        j["distributions"].push_back(std::move(jd));
    }
    return j;
}

inline std::vector<AugmentationDistribution> distributions_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != 1)
            throw ConfigError("unsupported distribution schema_version");
        std::vector<AugmentationDistribution> dists;
        for (const auto& jd : j.at("distributions")) {
            AugmentationDistribution d;
            d.exercise_id = jd.at("exercise_id").get<std::string>();
            d.class_label = jd.at("class_label").get<int>();
            for (const auto& [segment, js] : jd.at("segments").items()) {
                SegmentAugStats stats;
                stats.offset_mean = detail::vec3_from_json(js.at("offset_mean"));
                stats.offset_std = detail::vec3_from_json(js.at("offset_std"));
                stats.range_mean = detail::vec3_from_json(js.at("range_mean"));
                stats.range_std = detail::vec3_from_json(js.at("range_std"));
                for (int a = 0; a < 3; ++a)
                    if (stats.offset_std[a] < 0.0 || stats.range_std[a] < 0.0 ||
                        stats.range_mean[a] < 0.0)
                        throw ConfigError("distribution (" + d.exercise_id + ", class " +
                                          std::to_string(d.class_label) + ") segment " + segment +
                                          ": negative std or range mean");
                d.segments[segment] = stats;
            }
            dists.push_back(std::move(d));
        }
        return dists;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("distribution file: ") + e.what());
    }
}

inline void save_distributions_file(const std::vector<AugmentationDistribution>& dists,
                                    const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write distribution file: " + path);
    out << distributions_to_json(dists).dump(2) << "\n";
}

inline std::vector<AugmentationDistribution> load_distributions_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open distribution file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("distribution file " + path + ": " + e.what());
    }
    return distributions_from_json(j);
}

inline nlohmann::ordered_json report_to_json(const GenerationReport& report) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["master_seed"] = report.master_seed;
    j["per_class_counts"] = report.per_class_counts;
    j["max_attempts"] = report.max_attempts;
    j["total_accepted"] = report.total_accepted;
    j["total_attempts"] = report.total_attempts;
    j["pairs"] = nlohmann::ordered_json::array();
    j["unreachable"] = nlohmann::ordered_json::array();
    for (const PairReport& p : report.pairs) {
        j["pairs"].push_back({{"source", p.source_id},
                              {"class", p.class_label},
                              {"attempts", p.attempts},
                              {"accepted", p.accepted},
                              {"acceptance_rate",
                               p.attempts == 0 ? 0.0
                                               : static_cast<double>(p.accepted) /
                                                     static_cast<double>(p.attempts)}});
        if (p.accepted == 0)
            j["unreachable"].push_back({{"source", p.source_id}, {"class", p.class_label}});
    }
    return j;
}

}  // namespace imuaug
