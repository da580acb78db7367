#include "imuaug/skeleton.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace imuaug;

namespace {

SkeletalModel hinge_model(double lo = -3.0, double hi = 3.0) {
    SkeletalModel m;
    Segment base;
    base.id = "base";
    base.length = 0.2;
    Segment link;
    link.id = "link";
    link.parent = 0;
    link.attach = {0.0, 0.0, -0.2};
    link.length = 1.0;
    link.dofs = {{'x', lo, hi}};
    m.segments = {base, link};
    finalize_model(m);
    return m;
}

SkeletalModel two_link_model() {
    SkeletalModel m;
    Segment base;
    base.id = "base";
    base.length = 0.1;
    Segment l1;
    l1.id = "link1";
    l1.parent = 0;
    l1.attach = {0.0, 0.0, -0.1};
    l1.length = 1.0;
    l1.dofs = {{'x', -3.0, 3.0}};
    Segment l2;
    l2.id = "link2";
    l2.parent = 1;
    l2.attach = {0.0, 0.0, -1.0};
    l2.length = 1.0;
    l2.dofs = {{'x', -3.0, 3.0}};
    m.segments = {base, l1, l2};
    finalize_model(m);
    return m;
}

SkeletalModel load_body(const char* name) {
    return load_model_file(std::string(IMUAUG_ASSET_DIR) + "/models/" + name);
}

Pose random_in_limits_pose(const SkeletalModel& m, std::mt19937_64& rng, double margin = 0.05) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    Pose p = neutral_pose(m);
    for (const Segment& s : m.segments)
        for (std::size_t d = 0; d < s.dofs.size(); ++d) {
            const double lo = s.dofs[d].lo, hi = s.dofs[d].hi;
            const double pad = margin * (hi - lo);
            p.joint_angles[s.dof_offset + d] = lo + pad + u(rng) * (hi - lo - 2.0 * pad);
        }
    p.root_orientation = normalized(Quat{n(rng), n(rng), n(rng), n(rng)});
    return p;
}

std::vector<std::optional<Quat>> targets_from_fk(const SkeletalModel& m, const Pose& p) {
    const FkFrame f = forward_kinematics(m, p);
    std::vector<std::optional<Quat>> t(m.segments.size());
    for (std::size_t i = 0; i < m.segments.size(); ++i) t[i] = canonical(f.orientation[i]);
    return t;
}

}  // namespace

TEST(ForwardKinematics, NeutralPoseIsIdentityStack) {
    const SkeletalModel m = load_body("body15.json");
    ASSERT_EQ(m.segments.size(), 15u);
    ASSERT_EQ(m.dof_count, 30);
    const FkFrame f = forward_kinematics(m, neutral_pose(m));
    for (const Quat& q : f.orientation) EXPECT_LE(angle_between(q, Quat{}), 1e-12);
    const int femur_l = m.find_segment("femur_l");
    const int foot_l = m.find_segment("foot_l");
    const int head = m.find_segment("head");
    EXPECT_NEAR(f.proximal[femur_l].x, 0.10, 1e-12);
    EXPECT_NEAR(f.proximal[femur_l].z, -0.05, 1e-12);
    EXPECT_NEAR(f.distal[foot_l].z, -1.00, 1e-12);
    EXPECT_NEAR(f.distal[head].z, -0.65, 1e-12);
}

TEST(ForwardKinematics, SingleHingeMatchesPlanarTrig) {
    const SkeletalModel m = hinge_model();
    Pose p = neutral_pose(m);
    for (double theta : {0.0, 0.3, kPi / 2, -1.1, 2.5}) {
        p.joint_angles[0] = theta;
        const FkFrame f = forward_kinematics(m, p);
        EXPECT_NEAR(f.distal[1].x, 0.0, 1e-12);
        EXPECT_NEAR(f.distal[1].y, std::sin(theta), 1e-12);
        EXPECT_NEAR(f.distal[1].z, -0.2 - std::cos(theta), 1e-12);
    }
}

TEST(ForwardKinematics, TwoLinkArmClosedForm) {
    const SkeletalModel m = two_link_model();
    Pose p = neutral_pose(m);
    p.joint_angles = {kPi / 4, kPi / 4};
    const FkFrame f = forward_kinematics(m, p);
    const double s1 = std::sin(kPi / 4), s12 = std::sin(kPi / 2);
    const double c1 = std::cos(kPi / 4), c12 = std::cos(kPi / 2);
    EXPECT_NEAR(f.distal[2].y, s1 + s12, 1e-12);
    EXPECT_NEAR(f.distal[2].z, -0.1 - c1 - c12, 1e-12);
}

TEST(ForwardKinematics, RejectsDimensionMismatch) {
    const SkeletalModel m = hinge_model();
    Pose p = neutral_pose(m);
    p.joint_angles.push_back(0.0);
    EXPECT_THROW(forward_kinematics(m, p), InvalidArgument);
}

TEST(FitPose, RecoversRandomInLimitsPoses) {
    const SkeletalModel m = load_body("body15.json");
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const Pose truth = random_in_limits_pose(m, rng);
        const auto targets = targets_from_fk(m, truth);
        const FitResult fit = fit_pose(m, targets, neutral_pose(m));
        EXPECT_LE(fit.residual, 1e-6) << "trial " << trial;
        for (int d = 0; d < m.dof_count; ++d)
            EXPECT_NEAR(fit.pose.joint_angles[d], truth.joint_angles[d], 1e-3)
                << "trial " << trial << " dof " << d;
        EXPECT_LE(angle_between(fit.pose.root_orientation, truth.root_orientation), 1e-9);
    }
}

TEST(FitPose, ClampsToLimitBoundary) {
    const SkeletalModel m = hinge_model(-1.0, 1.0);
    std::vector<std::optional<Quat>> targets(2);
    targets[0] = Quat{};
    targets[1] = from_axis_angle({1, 0, 0}, 2.0);
    const FitResult fit = fit_pose(m, targets, neutral_pose(m));
    EXPECT_DOUBLE_EQ(fit.pose.joint_angles[0], 1.0);
    EXPECT_NEAR(fit.residual, 1.0, 1e-6);  // (2.0 - 1.0)^2
}

TEST(FitPose, WarmStartFixedPoint) {
    const SkeletalModel m = load_body("body15.json");
    std::mt19937_64 rng(202);
    const Pose warm = random_in_limits_pose(m, rng);
    const auto targets = targets_from_fk(m, warm);
    const FitResult fit = fit_pose(m, targets, warm);
    EXPECT_LE(fit.iterations, 2);
    for (int d = 0; d < m.dof_count; ++d)
        EXPECT_DOUBLE_EQ(fit.pose.joint_angles[d], warm.joint_angles[d]);
}

TEST(FitPose, RejectsDegenerateInput) {
    const SkeletalModel m = hinge_model();
    EXPECT_THROW(fit_pose(m, std::vector<std::optional<Quat>>(2), neutral_pose(m)),
                 InvalidArgument);
    EXPECT_THROW(fit_pose(m, std::vector<std::optional<Quat>>(5), neutral_pose(m)),
                 InvalidArgument);
}

namespace {

// Smooth in-limits motion with known ground truth, used for IK round trips.
std::vector<Pose> synthetic_motion(const SkeletalModel& m, int frames, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> center(m.dof_count), amp(m.dof_count), phase(m.dof_count);
    for (const Segment& s : m.segments)
        for (std::size_t d = 0; d < s.dofs.size(); ++d) {
            const int g = s.dof_offset + static_cast<int>(d);
            const double lo = s.dofs[d].lo, hi = s.dofs[d].hi;
            center[g] = 0.5 * (lo + hi);
            amp[g] = 0.35 * (hi - lo) * u(rng);
            phase[g] = 2.0 * kPi * u(rng);
        }
    std::vector<Pose> poses;
    for (int t = 0; t < frames; ++t) {
        Pose p = neutral_pose(m);
        const double s = 2.0 * kPi * t / frames;
        for (int g = 0; g < m.dof_count; ++g)
            p.joint_angles[g] = center[g] + amp[g] * std::sin(s + phase[g]);
        p.root_orientation = from_axis_angle({0, 0, 1}, 0.2 * std::sin(s));
        poses.push_back(std::move(p));
    }
    return poses;
}

std::vector<OrientationTrajectory> trajectories_of(const SkeletalModel& m,
                                                   const std::vector<Pose>& poses) {
    return export_consistent_orientations(m, poses, 50.0);
}

}  // namespace

TEST(RunIk, ConstantTargetsGiveConstantPoses) {
    const SkeletalModel m = load_body("body9.json");
    std::mt19937_64 rng(303);
    const Pose truth = random_in_limits_pose(m, rng);
    auto trajs = trajectories_of(m, std::vector<Pose>(10, truth));
    const IkResult ik = run_ik(m, trajs);
    ASSERT_EQ(ik.poses.size(), 10u);
    for (const Pose& p : ik.poses)
        for (int d = 0; d < m.dof_count; ++d)
            EXPECT_NEAR(p.joint_angles[d], ik.poses[0].joint_angles[d], 1e-4);
}

TEST(RunIk, SolvedPosesRestOnGroundLandmarks) {
    // With heel/toe landmarks flagged as floor contacts, run_ik re-grounds the
    // (otherwise unobservable) root height: the lowest contact sits at z = 0.
    const SkeletalModel m = load_body("body9.json");
    ASSERT_FALSE(m.ground_landmarks.empty());
    auto trajs = trajectories_of(m, std::vector<Pose>(4, neutral_pose(m)));
    const IkResult ik = run_ik(m, trajs);
    for (const Pose& p : ik.poses) {
        EXPECT_NEAR(p.root_position.z, 1.0, 1e-9);  // hip 0.05 + leg 0.80 + foot drop 0.15
        const FkFrame f = forward_kinematics(m, p);
        double z_min = std::numeric_limits<double>::infinity();
        for (int lm : m.ground_landmarks)
            z_min = std::min(z_min, landmark_position(m, f, lm).z);
        EXPECT_NEAR(z_min, 0.0, 1e-9);
    }
}

TEST(RunIk, SmoothMotionRoundTrip) {
    const SkeletalModel m = load_body("body9.json");
    const std::vector<Pose> truth = synthetic_motion(m, 60, 404);
    const IkResult ik = run_ik(m, trajectories_of(m, truth));
    ASSERT_EQ(ik.poses.size(), truth.size());
    for (std::size_t t = 0; t < truth.size(); ++t) {
        EXPECT_LE(ik.residuals[t], 1e-6) << "frame " << t;
        for (int d = 0; d < m.dof_count; ++d)
            EXPECT_NEAR(ik.poses[t].joint_angles[d], truth[t].joint_angles[d], 1e-3)
                << "frame " << t << " dof " << d;
    }
}

TEST(RunIk, LimitViolatingTargetsStayClamped) {
    const SkeletalModel m = hinge_model(-1.0, 1.0);
    OrientationTrajectory base{"base", 50.0, std::vector<Quat>(6, Quat{})};
    OrientationTrajectory link{"link", 50.0, {}};
    for (int t = 0; t < 6; ++t) {
        const double theta = (t < 3) ? 0.5 : 1.5;  // violates the +1.0 limit from frame 3 on
        link.samples.push_back(from_axis_angle({1, 0, 0}, theta));
    }
    const IkResult ik = run_ik(m, {base, link});
    for (std::size_t t = 0; t < ik.poses.size(); ++t) {
        EXPECT_LE(ik.poses[t].joint_angles[0], 1.0);
        EXPECT_GE(ik.poses[t].joint_angles[0], -1.0);
        if (t < 3)
            EXPECT_LE(ik.residuals[t], 1e-9);
        else
            EXPECT_GE(ik.residuals[t], 0.2);  // (1.5 - 1.0)^2
    }
}

TEST(RunIk, RejectsMismatchedInput) {
    const SkeletalModel m = hinge_model();
    OrientationTrajectory a{"base", 50.0, std::vector<Quat>(4, Quat{})};
    OrientationTrajectory b{"link", 50.0, std::vector<Quat>(5, Quat{})};
    EXPECT_THROW(run_ik(m, {a, b}), InvalidArgument);
    b.samples.pop_back();
    b.sample_rate = 100.0;
    EXPECT_THROW(run_ik(m, {a, b}), InvalidArgument);
    b.sample_rate = 50.0;
    b.segment_id = "nope";
    EXPECT_THROW(run_ik(m, {a, b}), InvalidArgument);
    EXPECT_THROW(run_ik(m, {}), InvalidArgument);
}

TEST(RunIk, IsDeterministic) {
    const SkeletalModel m = load_body("body9.json");
    const std::vector<Pose> truth = synthetic_motion(m, 20, 505);
    const auto trajs = trajectories_of(m, truth);
    const IkResult a = run_ik(m, trajs);
    const IkResult b = run_ik(m, trajs);
    for (std::size_t t = 0; t < a.poses.size(); ++t)
        for (int d = 0; d < m.dof_count; ++d)
            EXPECT_EQ(a.poses[t].joint_angles[d], b.poses[t].joint_angles[d]);
}

TEST(ExportConsistentOrientations, NeutralPosesGiveIdentityTrajectories) {
    const SkeletalModel m = load_body("body9.json");
    const auto trajs = export_consistent_orientations(m, {neutral_pose(m), neutral_pose(m)}, 50.0);
    ASSERT_EQ(trajs.size(), m.segments.size());
    for (const auto& traj : trajs)
        for (const Quat& q : traj.samples) EXPECT_LE(angle_between(q, Quat{}), 1e-12);
}

TEST(ExportConsistentOrientations, RoundTripStaysCloseToTargets) {
    const SkeletalModel m = load_body("body9.json");
    const std::vector<Pose> truth = synthetic_motion(m, 30, 606);
    const auto targets = trajectories_of(m, truth);
    const IkResult ik = run_ik(m, targets);
    const auto exported = export_consistent_orientations(m, ik.poses, 50.0);
    for (std::size_t s = 0; s < targets.size(); ++s)
        for (std::size_t t = 0; t < targets[s].samples.size(); ++t)
            EXPECT_LE(angle_between(exported[s].samples[t], targets[s].samples[t]), 1e-3);
}

TEST(ExportConsistentOrientations, ReprojectionIsIdempotent) {
    const SkeletalModel m = load_body("body9.json");
    const std::vector<Pose> truth = synthetic_motion(m, 20, 707);
    const auto once = export_consistent_orientations(m, run_ik(m, trajectories_of(m, truth)).poses, 50.0);
    const auto twice = export_consistent_orientations(m, run_ik(m, once).poses, 50.0);
    for (std::size_t s = 0; s < once.size(); ++s)
        for (std::size_t t = 0; t < once[s].samples.size(); ++t)
            EXPECT_LE(angle_between(twice[s].samples[t], once[s].samples[t]), 1e-6);
}

TEST(ExtractMetrics, NeutralStandingGeometry) {
    const SkeletalModel m = load_body("body9.json");
    Pose p = neutral_pose(m);
    p.root_position = {0.0, 0.0, 1.0};  // grounded: heels and toes at z = 0
    const KinematicMetrics km = extract_metrics(m, {p}, m.metrics);
    EXPECT_NEAR(km.aggregate("femur_l_elevation", "mean"), -kPi / 2, 1e-12);
    EXPECT_NEAR(km.aggregate("femur_r_elevation", "mean"), -kPi / 2, 1e-12);
    EXPECT_NEAR(km.aggregate("heel_l_height", "max"), 0.0, 1e-12);
    EXPECT_NEAR(km.aggregate("heel_r_height", "max"), 0.0, 1e-12);
    EXPECT_NEAR(km.aggregate("pelvis_sway", "max"), 0.0, 1e-12);
}

TEST(ExtractMetrics, HorizontalThighElevationIsZero) {
    const SkeletalModel m = load_body("body9.json");
    Pose p = neutral_pose(m);
    p.joint_angles[m.segments[m.find_segment("femur_r")].dof_offset + 2] = kPi / 2;
    const KinematicMetrics km = extract_metrics(m, {p}, m.metrics);
    EXPECT_NEAR(km.aggregate("femur_r_elevation", "mean"), 0.0, 1e-9);
}

TEST(ExtractMetrics, LateralShiftShowsUpInSway) {
    const SkeletalModel m = load_body("body9.json");
    Pose a = neutral_pose(m);
    Pose b = a;
    b.root_position.x = 0.05;
    const KinematicMetrics km = extract_metrics(m, {a, b}, m.metrics);
    EXPECT_NEAR(km.aggregate("pelvis_sway", "max"), 0.05, 1e-9);
    EXPECT_NEAR(km.per_frame[km.index_of("pelvis_sway")][0], 0.0, 1e-12);
}

TEST(ExtractMetrics, AggregatesAreOrdered) {
    const SkeletalModel m = load_body("body9.json");
    const std::vector<Pose> poses = synthetic_motion(m, 40, 808);
    const KinematicMetrics km = extract_metrics(m, poses, m.metrics);
    for (std::size_t i = 0; i < km.aggregates.size(); ++i) {
        EXPECT_LE(km.aggregates[i].min, km.aggregates[i].mean);
        EXPECT_LE(km.aggregates[i].mean, km.aggregates[i].max);
    }
}

TEST(ExtractMetrics, RejectsUnknownReferences) {
    const SkeletalModel m = load_body("body9.json");
    MetricDef bad_seg{"m1", "segment_elevation", "wing", 0, "", "", 'x'};
    EXPECT_THROW(extract_metrics(m, {neutral_pose(m)}, {bad_seg}), ConfigError);
    MetricDef bad_kind{"m2", "torque", "torso", 0, "", "", 'x'};
    EXPECT_THROW(extract_metrics(m, {neutral_pose(m)}, {bad_kind}), ConfigError);
    MetricDef bad_dof{"m3", "joint_angle", "tibia_l", 4, "", "", 'x'};
    EXPECT_THROW(extract_metrics(m, {neutral_pose(m)}, {bad_dof}), ConfigError);
    EXPECT_THROW(extract_metrics(m, {}, m.metrics), InvalidArgument);
}

TEST(ModelValidation, RejectsStructuralErrors) {
    auto base = [] {
        SkeletalModel m;
        Segment root;
        root.id = "base";
        root.length = 0.2;
        Segment link;
        link.id = "link";
        link.parent = 0;
        link.length = 1.0;
        link.dofs = {{'x', -1.0, 1.0}};
        m.segments = {root, link};
        return m;
    };
    {
        SkeletalModel m = base();
        m.segments[1].id = "base";
        EXPECT_THROW(finalize_model(m), ConfigError);
    }
    {
        SkeletalModel m = base();
        m.segments[1].dofs[0] = {'x', 1.0, -1.0};
        EXPECT_THROW(finalize_model(m), ConfigError);
    }
    {
        SkeletalModel m = base();
        m.segments[1].length = 0.0;
        EXPECT_THROW(finalize_model(m), ConfigError);
    }
    {
        SkeletalModel m = base();
        m.segments[1].parent = -1;  // second root
        EXPECT_THROW(finalize_model(m), ConfigError);
    }
    {
        SkeletalModel m = base();
        m.segments[0].dofs = {{'x', -1.0, 1.0}};  // root with DoFs
        EXPECT_THROW(finalize_model(m), ConfigError);
    }
    {
        SkeletalModel m = base();
        m.segments[1].dofs[0].axis = 'w';
        EXPECT_THROW(finalize_model(m), ConfigError);
    }
    {
        SkeletalModel m = base();
        m.landmarks.push_back({"lm", 7, Vec3{}});
        EXPECT_THROW(finalize_model(m), ConfigError);
    }
}

TEST(ModelValidation, FileLoading) {
    EXPECT_THROW(load_model_file("/nonexistent/model.json"), DataError);
    nlohmann::json j = {{"schema_version", 2}, {"segments", nlohmann::json::array()}};
    EXPECT_THROW(model_from_json(j), ConfigError);
    const SkeletalModel m = load_body("body9.json");
    EXPECT_EQ(m.name, "body9");
    EXPECT_EQ(m.segments.size(), 9u);
    EXPECT_EQ(m.dof_count, 18);
    EXPECT_FALSE(m.metrics.empty());
    EXPECT_EQ(m.segments[m.root].id, "pelvis");
}
