#include "imuaug/calibration.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace imuaug;

namespace {

Quat random_unit_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return normalized(Quat{n(rng), n(rng), n(rng), n(rng)});
}

OrientationTrajectory constant_traj(const std::string& id, const Quat& q, int len = 20) {
    OrientationTrajectory traj{id, 50.0, std::vector<Quat>(len, q)};
    return traj;
}

}  // namespace

TEST(ComputeOffset, IdentityWindowIdentityReference) {
    const auto traj = constant_traj("pelvis", Quat{});
    const SegmentFrameOffset off = compute_offset(traj, 0, 10);
    EXPECT_LE(angle_between(off.offset, Quat{}), 1e-12);
}

TEST(ComputeOffset, OffsetIsConjugateOfWindowMean) {
    std::mt19937_64 rng(31);
    const Quat q = random_unit_quat(rng);
    const auto traj = constant_traj("femur_r", q);
    const SegmentFrameOffset off = compute_offset(traj, 0, 20);
    EXPECT_LE(angle_between(off.offset, conj(q)), 1e-9);
    const OrientationTrajectory mapped = apply_offset(off, traj);
    EXPECT_LE(angle_between(mapped.samples.front(), Quat{}), 1e-9);
}

TEST(ComputeOffset, RecoversGroundTruthFromNoisyWindow) {
    std::mt19937_64 rng(37);
    std::normal_distribution<double> noise(0.0, 0.01);
    const Quat truth = random_unit_quat(rng);
    OrientationTrajectory traj{"tibia_l", 50.0, {}};
    for (int i = 0; i < 10; ++i) {
        const Quat jitter = from_axis_angle({noise(rng), noise(rng), noise(rng) + 1e-6}, noise(rng));
        traj.samples.push_back(truth * jitter);
    }
    align_hemisphere(traj.samples);
    const SegmentFrameOffset off = compute_offset(traj, 0, 10);
    EXPECT_LE(angle_between(off.offset, conj(truth)), 0.02);
}

TEST(ComputeOffset, RejectsOutOfRangeWindow) {
    const auto traj = constant_traj("pelvis", Quat{});
    EXPECT_THROW(compute_offset(traj, 0, 50), InvalidArgument);
    EXPECT_THROW(compute_offset(traj, 5, 5), InvalidArgument);
}

TEST(ApplyOffset, IdentityOffsetKeepsTrajectory) {
    std::mt19937_64 rng(41);
    OrientationTrajectory traj{"foot_l", 50.0, {}};
    for (int i = 0; i < 8; ++i) traj.samples.push_back(random_unit_quat(rng));
    align_hemisphere(traj.samples);
    const OrientationTrajectory out = apply_offset({"foot_l", Quat{}}, traj);
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        EXPECT_LE(angle_between(out.samples[i], traj.samples[i]), 1e-12);
    }
}

TEST(ApplyOffset, MatchesMatrixCompositionOracle) {
    const Quat off = from_axis_angle({0, 0, 1}, kPi / 2);
    const Quat sample = from_axis_angle({1, 0, 0}, kPi / 2);
    const auto traj = constant_traj("torso", sample);
    const OrientationTrajectory out = apply_offset({"torso", off}, traj);
    // Rz(90) * Rx(90) maps +z to +x: check through vector rotation.
    const Vec3 v = rotate(out.samples[0], {0, 0, 1});
    EXPECT_NEAR(v.x, 1.0, 1e-12);
    EXPECT_NEAR(v.y, 0.0, 1e-12);
    EXPECT_NEAR(v.z, 0.0, 1e-12);
}

TEST(ApplyOffset, RejectsSegmentMismatch) {
    const auto traj = constant_traj("foot_l", Quat{});
    EXPECT_THROW(apply_offset({"foot_r", Quat{}}, traj), InvalidArgument);
}

TEST(ApplyOffset, InverseRoundTrip) {
    std::mt19937_64 rng(43);
    OrientationTrajectory traj{"seg", 50.0, {}};
    for (int i = 0; i < 16; ++i) traj.samples.push_back(random_unit_quat(rng));
    align_hemisphere(traj.samples);
    const SegmentFrameOffset off{"seg", random_unit_quat(rng)};
    const OrientationTrajectory back = apply_offset(off, apply_offset(inverse(off), traj));
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        EXPECT_LE(angle_between(back.samples[i], traj.samples[i]), 1e-9);
    }
}

TEST(ApplyOffset, PreservesRelativeRotations) {
    std::mt19937_64 rng(47);
    OrientationTrajectory traj{"seg", 50.0, {}};
    for (int i = 0; i < 12; ++i) traj.samples.push_back(random_unit_quat(rng));
    align_hemisphere(traj.samples);
    const SegmentFrameOffset off{"seg", random_unit_quat(rng)};
    const OrientationTrajectory out = apply_offset(off, traj);
    for (std::size_t i = 1; i < traj.samples.size(); ++i) {
        const Quat rel_in = conj(traj.samples[i - 1]) * traj.samples[i];
        const Quat rel_out = conj(out.samples[i - 1]) * out.samples[i];
        EXPECT_LE(angle_between(rel_in, rel_out), 1e-12);
    }
}
