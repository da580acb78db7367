#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "imuaug/error.hpp"
#include "imuaug/util.hpp"

namespace imuaug {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kUnitNormTol = 1e-6;     // accepted deviation on inputs
inline constexpr double kGimbalLockTol = 1e-6;   // |pitch - pi/2| below this counts as lock
inline constexpr double kSlerpLinearTol = 1e-7;  // below this angle slerp falls back to nlerp

// Unit quaternion (w, x, y, z) rotating body-frame vectors into the lab frame:
// v_lab = q * v_body * conj(q). Producing operations normalize and put the
// result into canonical sign (w >= 0).
struct Quat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Quat() = default;
    constexpr Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}
};

inline double norm(const Quat& q) {
    return std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
}

inline double dot(const Quat& a, const Quat& b) {
    return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Quat canonical(const Quat& q) {
    if (q.w < 0.0) return {-q.w, -q.x, -q.y, -q.z};
    return q;
}

inline Quat normalized(const Quat& q) {
    const double n = norm(q);
    if (n == 0.0) throw InvalidArgument("cannot normalize zero quaternion");
    return canonical({q.w / n, q.x / n, q.y / n, q.z / n});
}

inline void check_unit(const Quat& q, const char* where) {
    if (std::abs(norm(q) - 1.0) > kUnitNormTol) {
        throw InvalidArgument(std::string(where) + ": quaternion is not unit norm");
    }
}

inline Quat conj(const Quat& q) { return {q.w, -q.x, -q.y, -q.z}; }

// Hamilton product; the result is renormalized and sign-canonicalized.
inline Quat operator*(const Quat& a, const Quat& b) {
    return normalized(Quat{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
                           a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
                           a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
                           a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w});
}

inline Vec3 rotate(const Quat& q, const Vec3& v) {
    // v' = v + 2 u x (u x v + w v), u = (x, y, z)
    const Vec3 u{q.x, q.y, q.z};
    const Vec3 t = cross(u, Vec3{u.y * v.z - u.z * v.y + q.w * v.x, u.z * v.x - u.x * v.z + q.w * v.y,
                                 u.x * v.y - u.y * v.x + q.w * v.z});
    return {v.x + 2.0 * t.x, v.y + 2.0 * t.y, v.z + 2.0 * t.z};
}

inline Quat from_axis_angle(const Vec3& axis, double angle) {
    const double n = norm(axis);
    if (n == 0.0) throw InvalidArgument("axis-angle: zero axis");
    const double s = std::sin(0.5 * angle) / n;
    return canonical({std::cos(0.5 * angle), axis.x * s, axis.y * s, axis.z * s});
}

// Geodesic distance, in [0, pi], between two unit quaternions as rotations.
// Chord-based: for rotations differing by angle t the hemisphere-aligned
// quaternion chord is 2*sin(t/4), so asin keeps full precision near zero,
// where the naive 2*acos(|dot|) bottoms out around 3e-8.
inline double angle_between(const Quat& a, const Quat& b) {
    const double d = dot(a, b);
    const Quat r{a.w - (d < 0.0 ? -b.w : b.w), a.x - (d < 0.0 ? -b.x : b.x),
                 a.y - (d < 0.0 ? -b.y : b.y), a.z - (d < 0.0 ? -b.z : b.z)};
    const double half_chord = 0.5 * norm(r);
    return 4.0 * std::asin(std::min(1.0, half_chord));
}

// Roll/pitch/yaw in radians: the rotation is Rz(yaw) * Ry(pitch) * Rx(roll)
// (intrinsic z-y-x). Wrapped ranges: roll, yaw in (-pi, pi], pitch in
// [-pi/2, pi/2].
struct EulerAngles {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
};

// Conversion result; `degenerate` marks samples inside the gimbal-lock band
// where roll was folded into yaw.
struct EulerResult {
    EulerAngles angles;
    bool degenerate = false;
};

inline EulerResult quat_to_euler_checked(const Quat& q) {
    check_unit(q, "quat_to_euler");
    EulerResult r;
    const double sp = 2.0 * (q.w * q.y - q.z * q.x);
    const double clamped = std::max(-1.0, std::min(1.0, sp));
    r.angles.pitch = std::asin(clamped);
    if (std::abs(std::abs(r.angles.pitch) - 0.5 * kPi) < kGimbalLockTol) {
        // gimbal lock: only yaw -/+ roll is observable; report it all as yaw
        r.degenerate = true;
        r.angles.roll = 0.0;
        r.angles.pitch = std::copysign(0.5 * kPi, clamped);
        r.angles.yaw = (clamped > 0.0 ? -2.0 : 2.0) * std::atan2(q.x, q.w);
    } else {
        r.angles.roll = std::atan2(2.0 * (q.w * q.x + q.y * q.z), 1.0 - 2.0 * (q.x * q.x + q.y * q.y));
        r.angles.yaw = std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z));
    }
    return r;
}

inline EulerAngles quat_to_euler(const Quat& q) { return quat_to_euler_checked(q).angles; }

inline Quat euler_to_quat(const EulerAngles& e) {
    if (!std::isfinite(e.roll) || !std::isfinite(e.pitch) || !std::isfinite(e.yaw)) {
        throw InvalidArgument("euler_to_quat: non-finite angle");
    }
    const double cr = std::cos(0.5 * e.roll), sr = std::sin(0.5 * e.roll);
    const double cp = std::cos(0.5 * e.pitch), sp = std::sin(0.5 * e.pitch);
    const double cy = std::cos(0.5 * e.yaw), sy = std::sin(0.5 * e.yaw);
    return normalized(Quat{cy * cp * cr + sy * sp * sr, cy * cp * sr - sy * sp * cr,
                           cy * sp * cr + sy * cp * sr, sy * cp * cr - cy * sp * sr});
}

// Constant-angular-velocity interpolation; q1 is hemisphere-aligned to q0
// internally and near-parallel inputs fall back to normalized lerp.
inline Quat slerp(const Quat& q0, const Quat& q1, double t) {
    check_unit(q0, "slerp");
    check_unit(q1, "slerp");
    Quat b = q1;
    double d = dot(q0, b);
    if (d < 0.0) {
        b = {-b.w, -b.x, -b.y, -b.z};
        d = -d;
    }
    d = std::min(1.0, d);
    const double theta = std::acos(d);
    double s0, s1;
    if (theta < kSlerpLinearTol) {
        s0 = 1.0 - t;
        s1 = t;
    } else {
        const double st = std::sin(theta);
        s0 = std::sin((1.0 - t) * theta) / st;
        s1 = std::sin(t * theta) / st;
    }
    return normalized(Quat{s0 * q0.w + s1 * b.w, s0 * q0.x + s1 * b.x, s0 * q0.y + s1 * b.y,
                           s0 * q0.z + s1 * b.z});
}

// Orientation samples for one body segment at a fixed rate. Samples are kept
// hemisphere-aligned along the sequence (dot of neighbors >= 0), which means
// individual samples are deliberately not sign-canonicalized.
struct OrientationTrajectory {
    std::string segment_id;
    double sample_rate = 0.0;  // Hz
    std::vector<Quat> samples;
};

inline void align_hemisphere(std::vector<Quat>& samples) {
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (dot(samples[i - 1], samples[i]) < 0.0) {
            Quat& q = samples[i];
            q = {-q.w, -q.x, -q.y, -q.z};
        }
    }
}

inline void validate_trajectory(const OrientationTrajectory& traj) {
    if (traj.samples.size() < 2) throw InvalidArgument("trajectory needs at least 2 samples");
    for (const Quat& q : traj.samples) check_unit(q, "trajectory sample");
    for (std::size_t i = 1; i < traj.samples.size(); ++i) {
        if (dot(traj.samples[i - 1], traj.samples[i]) < 0.0) {
            throw InvalidArgument("trajectory samples are not hemisphere-aligned");
        }
    }
}

// Resamples to exactly n samples. Endpoints are copied bit-exactly; interior
// samples come from slerp between the bracketing input samples at linearly
// spaced normalized times.
inline OrientationTrajectory resample_trajectory(const OrientationTrajectory& traj, std::size_t n) {
    validate_trajectory(traj);
    if (n < 2) throw InvalidArgument("resample_trajectory: n must be >= 2");
    OrientationTrajectory out;
    out.segment_id = traj.segment_id;
    out.sample_rate =
        traj.sample_rate * static_cast<double>(n - 1) / static_cast<double>(traj.samples.size() - 1);
    out.samples.resize(n);
    const std::size_t m = traj.samples.size();
    out.samples.front() = traj.samples.front();
    out.samples.back() = traj.samples.back();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(n - 1) * static_cast<double>(m - 1);
        std::size_t lo = static_cast<std::size_t>(u);
        if (lo >= m - 1) lo = m - 2;
        out.samples[i] = slerp(traj.samples[lo], traj.samples[lo + 1], u - static_cast<double>(lo));
    }
    align_hemisphere(out.samples);
    return out;
}

// Removes 2*pi jumps per axis so that min/max over a track are meaningful.
// The first sample is kept unchanged.
inline std::vector<EulerAngles> unwrap_euler_track(const std::vector<EulerAngles>& angles) {
    if (angles.empty()) throw InvalidArgument("unwrap_euler_track: empty track");
    std::vector<EulerAngles> out = angles;
    auto unwrap_axis = [&](double EulerAngles::* axis) {
        for (std::size_t i = 1; i < out.size(); ++i) {
            double d = angles[i].*axis - angles[i - 1].*axis;
            d -= 2.0 * kPi * std::round(d / (2.0 * kPi));
            out[i].*axis = out[i - 1].*axis + d;
        }
    };
    unwrap_axis(&EulerAngles::roll);
    unwrap_axis(&EulerAngles::pitch);
    unwrap_axis(&EulerAngles::yaw);
    return out;
}

// One raw IMU sample: angular rate (rad/s) and specific force (m/s^2) in the
// sensor frame, plus the time step to the next sample.
struct ImuSample {
    Vec3 gyro;
    Vec3 accel;
    double dt = 0.0;
};

struct MadgwickResult {
    Quat q;
    bool accel_used = true;  // false when the accelerometer vector had zero norm
};

// Single update step of the gradient-descent complementary orientation
// filter: gyro integration plus a step of size beta toward gravity alignment.
inline MadgwickResult madgwick_update(const Quat& state, const ImuSample& sample, double beta = 0.033) {
    check_unit(state, "madgwick_update");
    if (sample.dt <= 0.0) throw InvalidArgument("madgwick_update: dt must be positive");
    if (beta < 0.0) throw InvalidArgument("madgwick_update: beta must be >= 0");

    const Quat& q = state;
    // rate of change from gyro: 0.5 * q * (0, w)
    double dw = 0.5 * (-q.x * sample.gyro.x - q.y * sample.gyro.y - q.z * sample.gyro.z);
    double dx = 0.5 * (q.w * sample.gyro.x + q.y * sample.gyro.z - q.z * sample.gyro.y);
    double dy = 0.5 * (q.w * sample.gyro.y - q.x * sample.gyro.z + q.z * sample.gyro.x);
    double dz = 0.5 * (q.w * sample.gyro.z + q.x * sample.gyro.y - q.y * sample.gyro.x);

    MadgwickResult result;
    const double an = norm(sample.accel);
    result.accel_used = an > 0.0;
    if (result.accel_used && beta > 0.0) {
        const Vec3 a{sample.accel.x / an, sample.accel.y / an, sample.accel.z / an};
        // f = (lab +z seen in the sensor frame) - normalized accel
        const double f1 = 2.0 * (q.x * q.z - q.w * q.y) - a.x;
        const double f2 = 2.0 * (q.w * q.x + q.y * q.z) - a.y;
        const double f3 = 2.0 * (0.5 - q.x * q.x - q.y * q.y) - a.z;
        double gw = -2.0 * q.y * f1 + 2.0 * q.x * f2;
        double gx = 2.0 * q.z * f1 + 2.0 * q.w * f2 - 4.0 * q.x * f3;
        double gy = -2.0 * q.w * f1 + 2.0 * q.z * f2 - 4.0 * q.y * f3;
        double gz = 2.0 * q.x * f1 + 2.0 * q.y * f2;
        const double gn = std::sqrt(gw * gw + gx * gx + gy * gy + gz * gz);
        if (gn > 0.0) {
            dw -= beta * gw / gn;
            dx -= beta * gx / gn;
            dy -= beta * gy / gn;
            dz -= beta * gz / gn;
        }
    }
    result.q = normalized(Quat{q.w + dw * sample.dt, q.x + dx * sample.dt, q.y + dy * sample.dt,
                               q.z + dz * sample.dt});
    return result;
}

struct OrientationEstimate {
    OrientationTrajectory trajectory;
    std::vector<std::size_t> flagged;  // samples integrated without accel correction
};

// Runs the filter over a raw sample stream starting from `initial`.
inline OrientationEstimate estimate_orientation(const std::string& segment_id,
                                                const std::vector<ImuSample>& samples,
                                                const Quat& initial = Quat{}, double beta = 0.033) {
    if (samples.size() < 2) throw InvalidArgument("estimate_orientation: need at least 2 samples");
    OrientationEstimate est;
    est.trajectory.segment_id = segment_id;
    est.trajectory.sample_rate = 1.0 / samples.front().dt;
    est.trajectory.samples.reserve(samples.size());
    Quat q = normalized(initial);
    est.trajectory.samples.push_back(q);
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const MadgwickResult r = madgwick_update(q, samples[i - 1], beta);
        if (!r.accel_used) est.flagged.push_back(i);
        q = r.q;
        est.trajectory.samples.push_back(q);
    }
    align_hemisphere(est.trajectory.samples);
    return est;
}

}  // namespace imuaug
