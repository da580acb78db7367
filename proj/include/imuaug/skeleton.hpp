#pragma once

// Simplified kinematic chain: a tree of rigid segments, each attached to its
// parent through a 0-3 DoF rotational joint with hard angle limits.  Segment
// local frames follow one convention throughout: the long axis points
// distally along -z, so in the neutral pose (all angles zero, identity root)
// every segment hangs straight down and the landmark stack is trivial to
// reason about.  The IK solver tracks per-segment world orientations only --
// no marker positions exist in this pipeline.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imuaug/error.hpp"
#include "imuaug/rotation.hpp"

namespace imuaug {

inline constexpr double kIkConvergenceTol = 1e-10;  // rad^2 per sweep
inline constexpr int kIkMaxIterations = 200;

struct Dof {
    char axis = 'x';  // 'x' | 'y' | 'z'
    double lo = 0.0;
    double hi = 0.0;
};

struct Segment {
    std::string id;
    int parent = -1;  // index into SkeletalModel::segments, -1 for the root
    double length = 0.0;
    Vec3 attach{};  // proximal joint position in the parent's local frame
    std::vector<Dof> dofs;  // rotations composed in declared order
    int dof_offset = 0;     // filled by finalize_model
};

struct Landmark {
    std::string id;
    int segment = -1;
    Vec3 local{};
    bool ground = false;  // candidate floor-contact point (heels, toes)
};

// Metric kinds understood by extract_metrics:
//   segment_elevation            angle of the segment long axis above horizontal
//   landmark_height              world z of a landmark
//   lateral_displacement         |axis coord of a landmark - its frame-0 value|
//   joint_angle                  one DoF of one joint, straight from the pose
//   landmark_horizontal_distance ground-plane distance between two landmarks
struct MetricDef {
    std::string id;
    std::string kind;
    std::string segment;     // segment_elevation, joint_angle
    int dof = 0;             // joint_angle
    std::string landmark;    // landmark_height, lateral_displacement, distance (a)
    std::string landmark_b;  // landmark_horizontal_distance
    char axis = 'x';         // lateral_displacement
};

struct SkeletalModel {
    std::string name;
    std::vector<Segment> segments;
    std::vector<Landmark> landmarks;
    std::vector<MetricDef> metrics;  // default catalogue shipped with the model

    // Derived by finalize_model.
    int dof_count = 0;
    int root = -1;
    std::vector<std::vector<int>> children;
    std::vector<std::vector<int>> subtree;  // DFS order, self first
    std::vector<int> ground_landmarks;      // landmarks flagged as floor contacts
    std::unordered_map<std::string, int> seg_index;
    std::unordered_map<std::string, int> lm_index;

    int find_segment(const std::string& id) const {
        auto it = seg_index.find(id);
        return it == seg_index.end() ? -1 : it->second;
    }
    int find_landmark(const std::string& id) const {
        auto it = lm_index.find(id);
        return it == lm_index.end() ? -1 : it->second;
    }
};

struct Pose {
    Vec3 root_position{};
    Quat root_orientation{};
    std::vector<double> joint_angles;  // ordered by model DoF enumeration
};

// Computes the derived fields and validates the structural invariants.
// Segments must be listed parent-before-child; exactly one root; the root
// carries no joint DoFs (its 6 DoF live in Pose directly).
inline void finalize_model(SkeletalModel& m) {
    const int n = static_cast<int>(m.segments.size());
    if (n == 0) throw ConfigError("model has no segments");
    m.seg_index.clear();
    m.lm_index.clear();
    m.children.assign(n, {});
    m.root = -1;
    m.dof_count = 0;
    for (int i = 0; i < n; ++i) {
        Segment& s = m.segments[i];
        if (s.id.empty()) throw ConfigError("segment without id");
        if (!m.seg_index.emplace(s.id, i).second)
            throw ConfigError("duplicate segment id: " + s.id);
        if (!(s.length > 0.0))
            throw ConfigError("segment " + s.id + ": length must be > 0");
        if (s.parent < 0) {
            if (m.root >= 0)
                throw ConfigError("multiple roots: " + m.segments[m.root].id + ", " + s.id);
            m.root = i;
            if (!s.dofs.empty())
                throw ConfigError("root segment " + s.id + " must not declare joint DoFs");
        } else {
            if (s.parent >= i)
                throw ConfigError("segment " + s.id + ": parent must be listed before child");
            m.children[s.parent].push_back(i);
        }
        if (s.dofs.size() > 3)
            throw ConfigError("segment " + s.id + ": at most 3 joint DoFs");
        for (const Dof& d : s.dofs) {
            if (d.axis != 'x' && d.axis != 'y' && d.axis != 'z')
                throw ConfigError("segment " + s.id + ": bad DoF axis");
            if (!(d.lo <= d.hi))
                throw ConfigError("segment " + s.id + ": DoF limits must satisfy lo <= hi");
        }
        s.dof_offset = m.dof_count;
        m.dof_count += static_cast<int>(s.dofs.size());
    }
    if (m.root < 0) throw ConfigError("model has no root segment");
    m.subtree.assign(n, {});
    for (int i = n - 1; i >= 0; --i) {
        m.subtree[i].push_back(i);
        for (int c : m.children[i])
            m.subtree[i].insert(m.subtree[i].end(), m.subtree[c].begin(), m.subtree[c].end());
    }
    m.ground_landmarks.clear();
    for (int li = 0; li < static_cast<int>(m.landmarks.size()); ++li) {
        const Landmark& lm = m.landmarks[li];
        if (lm.segment < 0 || lm.segment >= n)
            throw ConfigError("landmark " + lm.id + ": unknown segment");
        if (!m.lm_index.emplace(lm.id, li).second)
            throw ConfigError("duplicate landmark id: " + lm.id);
        if (lm.ground) m.ground_landmarks.push_back(li);
    }
}

inline Pose neutral_pose(const SkeletalModel& m) {
    Pose p;
    p.joint_angles.assign(m.dof_count, 0.0);
    for (const Segment& s : m.segments)
        for (std::size_t d = 0; d < s.dofs.size(); ++d)
            p.joint_angles[s.dof_offset + d] =
                std::clamp(0.0, s.dofs[d].lo, s.dofs[d].hi);
    return p;
}

inline void clamp_pose(const SkeletalModel& m, Pose& p) {
    for (const Segment& s : m.segments)
        for (std::size_t d = 0; d < s.dofs.size(); ++d) {
            double& a = p.joint_angles[s.dof_offset + d];
            a = std::clamp(a, s.dofs[d].lo, s.dofs[d].hi);
        }
}

inline Quat axis_rotation(char axis, double angle) {
    const double c = std::cos(0.5 * angle);
    const double s = std::sin(0.5 * angle);
    switch (axis) {
        case 'x': return canonical({c, s, 0.0, 0.0});
        case 'y': return canonical({c, 0.0, s, 0.0});
        case 'z': return canonical({c, 0.0, 0.0, s});
        default: throw InternalError("axis_rotation: bad axis");
    }
}

inline Quat joint_rotation(const Segment& s, const double* angles) {
    Quat r{};
    for (std::size_t d = 0; d < s.dofs.size(); ++d)
        r = r * axis_rotation(s.dofs[d].axis, angles[d]);
    return r;
}

struct FkFrame {
    std::vector<Quat> orientation;  // world, per segment
    std::vector<Vec3> proximal;     // world joint position
    std::vector<Vec3> distal;       // proximal + R * (0, 0, -length)
};

inline FkFrame forward_kinematics(const SkeletalModel& m, const Pose& pose) {
    const int n = static_cast<int>(m.segments.size());
    if (static_cast<int>(pose.joint_angles.size()) != m.dof_count)
        throw InvalidArgument("forward_kinematics: pose has " +
                              std::to_string(pose.joint_angles.size()) + " angles, model has " +
                              std::to_string(m.dof_count) + " DoFs");
    FkFrame f;
    f.orientation.resize(n);
    f.proximal.resize(n);
    f.distal.resize(n);
    for (int i = 0; i < n; ++i) {
        const Segment& s = m.segments[i];
        if (s.parent < 0) {
            f.orientation[i] = pose.root_orientation;
            f.proximal[i] = pose.root_position;
        } else {
            f.orientation[i] = f.orientation[s.parent] *
                               joint_rotation(s, &pose.joint_angles[s.dof_offset]);
            f.proximal[i] = f.proximal[s.parent] + rotate(f.orientation[s.parent], s.attach);
        }
        f.distal[i] = f.proximal[i] + rotate(f.orientation[i], {0.0, 0.0, -s.length});
    }
    return f;
}

inline Vec3 landmark_position(const SkeletalModel& m, const FkFrame& f, int landmark) {
    const Landmark& lm = m.landmarks[landmark];
    return f.proximal[lm.segment] + rotate(f.orientation[lm.segment], lm.local);
}

// Shifts the root vertically so the lowest ground-contact landmark touches
// z = 0.  Orientation-only tracking cannot observe translation, so this is
// how solved poses acquire a height reference; models without ground flags
// are left untouched.
inline void ground_pose(const SkeletalModel& m, Pose& pose) {
    if (m.ground_landmarks.empty()) return;
    const FkFrame f = forward_kinematics(m, pose);
    double z_min = std::numeric_limits<double>::infinity();
    for (int lm : m.ground_landmarks) z_min = std::min(z_min, landmark_position(m, f, lm).z);
    pose.root_position.z -= z_min;
}

struct FitResult {
    Pose pose;
    double residual = 0.0;  // rad^2, sum of squared orientation errors
    int iterations = 0;     // coordinate-descent sweeps executed
};

namespace detail {

// Damped per-DoF coordinate descent over the squared orientation error.
// Changing one DoF only touches orientations in that segment's subtree, so
// candidate angles are scored against subtree-local error deltas instead of
// re-running full FK.  The 1-D step is a clamped parabolic fit through three
// probes with one refinement, which is enough for superlinear decay on this
// smooth objective.
class PoseFitter {
public:
    PoseFitter(const SkeletalModel& m, const std::vector<std::optional<Quat>>& targets,
               const Pose& warm_start)
        : m_(m) {
        const int n = static_cast<int>(m.segments.size());
        if (static_cast<int>(targets.size()) != n)
            throw InvalidArgument("fit_pose: targets size does not match segment count");
        if (static_cast<int>(warm_start.joint_angles.size()) != m.dof_count)
            throw InvalidArgument("fit_pose: warm start does not match model DoF count");
        targeted_.assign(n, 0);
        target_.assign(n, Quat{});
        int count = 0;
        for (int i = 0; i < n; ++i)
            if (targets[i]) {
                check_unit(*targets[i], "fit_pose target");
                targeted_[i] = 1;
                target_[i] = canonical(*targets[i]);
                ++count;
            }
        if (count == 0) throw InvalidArgument("fit_pose: no targets given");
        root_p_ = warm_start.root_position;
        root_q_ = canonical(normalized(warm_start.root_orientation));
        if (targeted_[m.root]) root_q_ = target_[m.root];
        angles_ = warm_start.joint_angles;
        Pose tmp{root_p_, root_q_, angles_};
        clamp_pose(m, tmp);
        angles_ = tmp.joint_angles;
        step_.assign(m.dof_count, 0.25);
        local_.resize(n);
        world_.resize(n);
        cand_world_.resize(n);
        sqerr_.assign(n, 0.0);
        cand_sqerr_.assign(n, 0.0);
        refresh_all();
        analytic_pass();
    }

    FitResult solve() {
        int it = 0;
        while (it < kIkMaxIterations) {
            const double before = f_;
            sweep();
            ++it;
            if (before - f_ < kIkConvergenceTol) break;
        }
        return {Pose{root_p_, root_q_, angles_}, f_, it};
    }

private:
    static double sq(double v) { return v * v; }

    void refresh_all() {
        f_ = 0.0;
        for (int i = 0; i < static_cast<int>(m_.segments.size()); ++i) {
            const Segment& s = m_.segments[i];
            local_[i] = s.parent < 0 ? Quat{} : joint_rotation(s, &angles_[s.dof_offset]);
            world_[i] = s.parent < 0 ? root_q_ : world_[s.parent] * local_[i];
            sqerr_[i] = targeted_[i] ? sq(angle_between(world_[i], target_[i])) : 0.0;
            f_ += sqerr_[i];
        }
    }

    // Closed-form joint decomposition of the desired local rotation, clamped
    // to limits.  Covers every axis pattern the shipped models use; returns
    // false on patterns it cannot decompose (then the descent does all the
    // work from the warm start instead).
    bool decompose(const Segment& s, Quat d, double* out) const {
        d = canonical(d);
        auto comp = [&](char ax) { return ax == 'x' ? d.x : ax == 'y' ? d.y : d.z; };
        const std::size_t k = s.dofs.size();
        if (k == 1) {
            out[0] = 2.0 * std::atan2(comp(s.dofs[0].axis), d.w);
        } else if (k == 2 && s.dofs[0].axis != s.dofs[1].axis) {
            // Ra(t0) * Rb(t1) has w = c0*c1 and puts c0*s1 / s0*c1 on the two
            // DoF axes, so each half-angle tangent reads off directly.
            out[0] = 2.0 * std::atan2(comp(s.dofs[0].axis), d.w);
            out[1] = 2.0 * std::atan2(comp(s.dofs[1].axis), d.w);
        } else if (k == 3 && s.dofs[0].axis == 'z' && s.dofs[1].axis == 'y' &&
                   s.dofs[2].axis == 'x') {
            const EulerResult e = quat_to_euler_checked(d);
            out[0] = e.angles.yaw;
            out[1] = e.angles.pitch;
            out[2] = e.angles.roll;
        } else {
            return false;
        }
        for (std::size_t j = 0; j < k; ++j) out[j] = std::clamp(out[j], s.dofs[j].lo, s.dofs[j].hi);
        return true;
    }

    // Top-down analytic initialization: solve each targeted joint against its
    // parent's already-updated world orientation.  Kept only when it beats
    // the warm start, so an already-optimal warm start passes through
    // untouched (bitwise).
    void analytic_pass() {
        const std::vector<double> saved = angles_;
        const double f_saved = f_;
        std::vector<Quat> w(m_.segments.size());
        for (int i = 0; i < static_cast<int>(m_.segments.size()); ++i) {
            const Segment& s = m_.segments[i];
            if (s.parent < 0) {
                w[i] = root_q_;
                continue;
            }
            if (targeted_[i] && !s.dofs.empty())
                decompose(s, conj(w[s.parent]) * target_[i], &angles_[s.dof_offset]);
            w[i] = w[s.parent] * joint_rotation(s, &angles_[s.dof_offset]);
        }
        refresh_all();
        if (!(f_ < f_saved)) {
            angles_ = saved;
            refresh_all();
        }
    }

    // Objective if DoF `di` of segment `si` were set to theta; fills the
    // cand_* scratch for a later commit.
    double eval(int si, int di, double theta) {
        const Segment& s = m_.segments[si];
        cand_local_ = Quat{};
        for (std::size_t d = 0; d < s.dofs.size(); ++d)
            cand_local_ = cand_local_ * axis_rotation(
                s.dofs[d].axis,
                static_cast<int>(d) == di ? theta : angles_[s.dof_offset + d]);
        double delta = 0.0;
        for (int k : m_.subtree[si]) {
            const int par = m_.segments[k].parent;
            const Quat& pw = (k == si) ? world_[par] : cand_world_[par];
            cand_world_[k] = pw * (k == si ? cand_local_ : local_[k]);
            if (targeted_[k]) {
                cand_sqerr_[k] = sq(angle_between(cand_world_[k], target_[k]));
                delta += cand_sqerr_[k] - sqerr_[k];
            }
        }
        return f_ + delta;
    }

    void commit(int si, int di, double theta) {
        eval(si, di, theta);
        angles_[m_.segments[si].dof_offset + di] = theta;
        local_[si] = cand_local_;
        for (int k : m_.subtree[si]) {
            world_[k] = cand_world_[k];
            if (targeted_[k]) sqerr_[k] = cand_sqerr_[k];
        }
        f_ = 0.0;  // re-sum to keep incremental drift out of the convergence test
        for (double e : sqerr_) f_ += e;
    }

    void optimize_dof(int si, int di) {
        const Segment& s = m_.segments[si];
        const Dof& dof = s.dofs[di];
        if (dof.hi - dof.lo < 1e-12) return;
        const int g = s.dof_offset + di;
        const double x0 = angles_[g];
        const double f0 = f_;
        const double h = step_[g];

        std::vector<std::pair<double, double>>& pts = scratch_pts_;
        pts.clear();
        pts.push_back({x0, f0});
        double best_x = x0, best_f = f0;
        auto consider = [&](double x) {
            for (const auto& p : pts)
                if (std::abs(p.first - x) < 1e-15) return p.second;
            const double fx = eval(si, di, x);
            pts.push_back({x, fx});
            if (fx < best_f) {
                best_f = fx;
                best_x = x;
            }
            return fx;
        };

        const double xa = std::min(x0 + h, dof.hi);
        const double xb = std::max(x0 - h, dof.lo);
        if (xa > x0) consider(xa);
        if (xb < x0) consider(xb);
        for (int refine = 0; refine < 2; ++refine) {
            // Parabola through best_x and its nearest evaluated flanks.
            std::sort(pts.begin(), pts.end());
            int bi = 0;
            for (int i = 0; i < static_cast<int>(pts.size()); ++i)
                if (pts[i].second < pts[bi].second) bi = i;
            if (bi == 0 || bi + 1 == static_cast<int>(pts.size())) {
                // Best sits on the hull: either a limit boundary or the
                // probes did not bracket; extend once toward the descent side.
                const double dir = (bi == 0) ? -1.0 : 1.0;
                const double xe = std::clamp(pts[bi].first + dir * 2.0 * h, dof.lo, dof.hi);
                if (std::abs(xe - pts[bi].first) < 1e-15) break;
                consider(xe);
                continue;
            }
            const double x1 = pts[bi - 1].first, fl = pts[bi - 1].second;
            const double x2 = pts[bi].first, fm = pts[bi].second;
            const double x3 = pts[bi + 1].first, fr = pts[bi + 1].second;
            const double d21 = x2 - x1, d23 = x2 - x3;
            const double den = d21 * (fm - fr) - d23 * (fm - fl);
            if (!(std::abs(den) > 0.0)) break;
            double xv = x2 - 0.5 * (d21 * d21 * (fm - fr) - d23 * d23 * (fm - fl)) / den;
            if (!std::isfinite(xv)) break;
            xv = std::clamp(xv, dof.lo, dof.hi);
            const double before = best_f;
            consider(xv);
            if (best_f >= before - 1e-15 * (1.0 + before)) break;
        }

        if (best_f < f0 && best_x != x0) {
            commit(si, di, best_x);
            step_[g] = std::clamp(2.0 * std::abs(best_x - x0), 1e-7, 0.5);
        } else {
            step_[g] = std::max(0.25 * step_[g], 1e-8);
        }
    }

    void sweep() {
        for (int si = 0; si < static_cast<int>(m_.segments.size()); ++si)
            for (std::size_t di = 0; di < m_.segments[si].dofs.size(); ++di)
                optimize_dof(si, static_cast<int>(di));
    }

    const SkeletalModel& m_;
    std::vector<char> targeted_;
    std::vector<Quat> target_;
    Vec3 root_p_;
    Quat root_q_;
    std::vector<double> angles_;
    std::vector<double> step_;
    std::vector<Quat> local_, world_, cand_world_;
    std::vector<double> sqerr_, cand_sqerr_;
    Quat cand_local_;
    double f_ = 0.0;
    std::vector<std::pair<double, double>> scratch_pts_;
};

}  // namespace detail

// Targets are aligned with model.segments; absent entries are not tracked.
// The root orientation, when targeted, is fitted directly (the root has no
// joint between it and the world).  Root position is unobservable from
// orientations and passes through from the warm start.
inline FitResult fit_pose(const SkeletalModel& m,
                          const std::vector<std::optional<Quat>>& targets,
                          const Pose& warm_start) {
    return detail::PoseFitter(m, targets, warm_start).solve();
}

struct IkResult {
    std::vector<Pose> poses;
    std::vector<double> residuals;  // rad^2 per frame
};

inline IkResult run_ik(const SkeletalModel& m, const std::vector<OrientationTrajectory>& trajs) {
    if (trajs.empty()) throw InvalidArgument("run_ik: no trajectories");
    const std::size_t len = trajs[0].samples.size();
    const double rate = trajs[0].sample_rate;
    std::vector<int> seg_of(trajs.size());
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        if (trajs[i].samples.size() != len)
            throw InvalidArgument("run_ik: trajectory lengths differ");
        if (trajs[i].sample_rate != rate)
            throw InvalidArgument("run_ik: trajectory sample rates differ");
        seg_of[i] = m.find_segment(trajs[i].segment_id);
        if (seg_of[i] < 0)
            throw InvalidArgument("run_ik: unknown segment " + trajs[i].segment_id);
    }
    if (len == 0) throw InvalidArgument("run_ik: empty trajectories");

    IkResult out;
    out.poses.reserve(len);
    out.residuals.reserve(len);
    std::vector<std::optional<Quat>> targets(m.segments.size());
    Pose warm = neutral_pose(m);
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t i = 0; i < trajs.size(); ++i)
            targets[seg_of[i]] = trajs[i].samples[t];
        FitResult fit = fit_pose(m, targets, warm);
        ground_pose(m, fit.pose);
        warm = fit.pose;
        out.poses.push_back(std::move(fit.pose));
        out.residuals.push_back(fit.residual);
    }
    return out;
}

// Model-consistent world orientations for every segment -- what augmentation
// and the classifier consume in place of the raw augmented trajectories.
inline std::vector<OrientationTrajectory> export_consistent_orientations(
    const SkeletalModel& m, const std::vector<Pose>& poses, double sample_rate) {
    std::vector<OrientationTrajectory> out(m.segments.size());
    for (std::size_t s = 0; s < m.segments.size(); ++s) {
        out[s].segment_id = m.segments[s].id;
        out[s].sample_rate = sample_rate;
        out[s].samples.reserve(poses.size());
    }
    for (const Pose& p : poses) {
        const FkFrame f = forward_kinematics(m, p);
        for (std::size_t s = 0; s < m.segments.size(); ++s)
            out[s].samples.push_back(f.orientation[s]);
    }
    for (auto& traj : out) align_hemisphere(traj.samples);
    return out;
}

struct MetricAggregates {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

struct KinematicMetrics {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> per_frame;  // [metric][frame]
    std::vector<MetricAggregates> aggregates;

    int index_of(const std::string& id) const {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == id) return static_cast<int>(i);
        return -1;
    }
    double aggregate(const std::string& id, const std::string& kind) const {
        const int i = index_of(id);
        if (i < 0) throw ConfigError("unknown metric: " + id);
        if (kind == "min") return aggregates[i].min;
        if (kind == "max") return aggregates[i].max;
        if (kind == "mean") return aggregates[i].mean;
        throw ConfigError("unknown aggregate kind: " + kind);
    }
};

inline KinematicMetrics extract_metrics(const SkeletalModel& m, const std::vector<Pose>& poses,
                                        const std::vector<MetricDef>& catalogue) {
    if (poses.empty()) throw InvalidArgument("extract_metrics: empty pose sequence");

    enum Kind { kElevation, kLmHeight, kLateral, kJointAngle, kHorizDist };
    struct Resolved {
        Kind kind;
        int seg = -1, dof = -1, lm = -1, lm_b = -1, axis = 0;
    };
    std::vector<Resolved> rs;
    rs.reserve(catalogue.size());
    for (const MetricDef& d : catalogue) {
        Resolved r;
        if (d.kind == "segment_elevation") {
            r.kind = kElevation;
            r.seg = m.find_segment(d.segment);
            if (r.seg < 0) throw ConfigError("metric " + d.id + ": unknown segment " + d.segment);
        } else if (d.kind == "landmark_height") {
            r.kind = kLmHeight;
            r.lm = m.find_landmark(d.landmark);
            if (r.lm < 0) throw ConfigError("metric " + d.id + ": unknown landmark " + d.landmark);
        } else if (d.kind == "lateral_displacement") {
            r.kind = kLateral;
            r.lm = m.find_landmark(d.landmark);
            if (r.lm < 0) throw ConfigError("metric " + d.id + ": unknown landmark " + d.landmark);
            if (d.axis != 'x' && d.axis != 'y' && d.axis != 'z')
                throw ConfigError("metric " + d.id + ": bad axis");
            r.axis = d.axis - 'x';
        } else if (d.kind == "joint_angle") {
            r.kind = kJointAngle;
            r.seg = m.find_segment(d.segment);
            if (r.seg < 0) throw ConfigError("metric " + d.id + ": unknown segment " + d.segment);
            if (d.dof < 0 || d.dof >= static_cast<int>(m.segments[r.seg].dofs.size()))
                throw ConfigError("metric " + d.id + ": DoF index out of range");
            r.dof = m.segments[r.seg].dof_offset + d.dof;
        } else if (d.kind == "landmark_horizontal_distance") {
            r.kind = kHorizDist;
            r.lm = m.find_landmark(d.landmark);
            r.lm_b = m.find_landmark(d.landmark_b);
            if (r.lm < 0 || r.lm_b < 0)
                throw ConfigError("metric " + d.id + ": unknown landmark");
        } else {
            throw ConfigError("metric " + d.id + ": unknown kind " + d.kind);
        }
        rs.push_back(r);
    }

    KinematicMetrics km;
    km.ids.reserve(catalogue.size());
    for (const MetricDef& d : catalogue) km.ids.push_back(d.id);
    km.per_frame.assign(catalogue.size(), {});
    for (auto& track : km.per_frame) track.reserve(poses.size());

    std::vector<double> anchor(catalogue.size(), 0.0);
    for (std::size_t t = 0; t < poses.size(); ++t) {
        const FkFrame f = forward_kinematics(m, poses[t]);
        for (std::size_t i = 0; i < rs.size(); ++i) {
            const Resolved& r = rs[i];
            double v = 0.0;
            switch (r.kind) {
                case kElevation: {
                    const Vec3 dir = rotate(f.orientation[r.seg], {0.0, 0.0, -1.0});
                    v = std::atan2(dir.z, std::hypot(dir.x, dir.y));
                    break;
                }
                case kLmHeight:
                    v = landmark_position(m, f, r.lm).z;
                    break;
                case kLateral: {
                    const Vec3 p = landmark_position(m, f, r.lm);
                    const double c = r.axis == 0 ? p.x : (r.axis == 1 ? p.y : p.z);
                    if (t == 0) anchor[i] = c;
                    v = std::abs(c - anchor[i]);
                    break;
                }
                case kJointAngle:
                    v = poses[t].joint_angles[r.dof];
                    break;
                case kHorizDist: {
                    const Vec3 a = landmark_position(m, f, r.lm);
                    const Vec3 b = landmark_position(m, f, r.lm_b);
                    v = std::hypot(a.x - b.x, a.y - b.y);
                    break;
                }
            }
            km.per_frame[i].push_back(v);
        }
    }

    km.aggregates.resize(catalogue.size());
    for (std::size_t i = 0; i < km.per_frame.size(); ++i) {
        const auto& track = km.per_frame[i];
        MetricAggregates& a = km.aggregates[i];
        a.min = *std::min_element(track.begin(), track.end());
        a.max = *std::max_element(track.begin(), track.end());
        double sum = 0.0;
        for (double v : track) sum += v;
        a.mean = sum / static_cast<double>(track.size());
    }
    return km;
}

// ---- model file I/O -------------------------------------------------------

inline MetricDef metric_from_json(const nlohmann::json& j) {
    MetricDef d;
    d.id = j.at("id").get<std::string>();
    d.kind = j.at("kind").get<std::string>();
    if (j.contains("segment")) d.segment = j["segment"].get<std::string>();
    if (j.contains("dof")) d.dof = j["dof"].get<int>();
    if (j.contains("landmark")) d.landmark = j["landmark"].get<std::string>();
    if (j.contains("landmark_b")) d.landmark_b = j["landmark_b"].get<std::string>();
    if (j.contains("axis")) {
        const std::string a = j["axis"].get<std::string>();
        if (a.size() != 1) throw ConfigError("metric " + d.id + ": bad axis");
        d.axis = a[0];
    }
    return d;
}

inline SkeletalModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != 1)
            throw ConfigError("unsupported model schema_version");
        SkeletalModel m;
        m.name = j.value("name", "");
        for (const auto& js : j.at("segments")) {
            Segment s;
            s.id = js.at("id").get<std::string>();
            s.length = js.at("length").get<double>();
            if (js.contains("parent") && !js["parent"].is_null()) {
                const std::string pid = js["parent"].get<std::string>();
                s.parent = -1;
                for (std::size_t k = 0; k < m.segments.size(); ++k)
                    if (m.segments[k].id == pid) s.parent = static_cast<int>(k);
                if (s.parent < 0)
                    throw ConfigError("segment " + s.id + ": unknown parent " + pid);
                if (js.contains("attach")) {
                    const auto& a = js["attach"];
                    s.attach = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
                } else {
                    s.attach = {0.0, 0.0, -m.segments[s.parent].length};
                }
            }
            if (js.contains("dofs"))
                for (const auto& jd : js["dofs"]) {
                    Dof d;
                    const std::string axis = jd.at("axis").get<std::string>();
                    if (axis.size() != 1) throw ConfigError("segment " + s.id + ": bad DoF axis");
                    d.axis = axis[0];
                    d.lo = jd.at("limits").at(0).get<double>();
                    d.hi = jd.at("limits").at(1).get<double>();
                    s.dofs.push_back(d);
                }
            m.segments.push_back(std::move(s));
        }
        if (j.contains("landmarks"))
            for (const auto& jl : j["landmarks"]) {
                Landmark lm;
                lm.id = jl.at("id").get<std::string>();
                const std::string sid = jl.at("segment").get<std::string>();
                lm.segment = -1;
                for (std::size_t k = 0; k < m.segments.size(); ++k)
                    if (m.segments[k].id == sid) lm.segment = static_cast<int>(k);
                const auto& p = jl.at("local");
                lm.local = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
                lm.ground = jl.value("ground", false);
                m.landmarks.push_back(std::move(lm));
            }
        if (j.contains("metrics"))
            for (const auto& jm : j["metrics"]) m.metrics.push_back(metric_from_json(jm));
        finalize_model(m);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model file: ") + e.what());
    }
}

inline SkeletalModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model file " + path + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace imuaug
