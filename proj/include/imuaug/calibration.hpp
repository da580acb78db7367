#pragma once

#include <cstddef>
#include <string>

#include "imuaug/error.hpp"
#include "imuaug/rotation.hpp"

namespace imuaug {

// Sensor-to-segment transformation: segment = offset * imu.
struct SegmentFrameOffset {
    std::string segment_id;
    Quat offset;
};

// Normalized component-wise mean of hemisphere-aligned quaternions. Valid for
// the small angular spread of a static calibration window.
inline Quat mean_orientation(const std::vector<Quat>& samples, std::size_t begin, std::size_t end) {
    if (begin >= end || end > samples.size()) {
        throw InvalidArgument("mean_orientation: window out of range");
    }
    const Quat& ref = samples[begin];
    Quat acc{0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = begin; i < end; ++i) {
        Quat q = samples[i];
        if (dot(ref, q) < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
        acc.w += q.w;
        acc.x += q.x;
        acc.y += q.y;
        acc.z += q.z;
    }
    return normalized(acc);
}

// Static-pose calibration: the offset maps the window mean onto the supplied
// reference orientation for this segment.
inline SegmentFrameOffset compute_offset(const OrientationTrajectory& imu_traj, std::size_t window_begin,
                                         std::size_t window_end, const Quat& reference = Quat{}) {
    validate_trajectory(imu_traj);
    if (window_begin >= window_end || window_end > imu_traj.samples.size()) {
        throw InvalidArgument("compute_offset: static window out of range for segment " +
                              imu_traj.segment_id);
    }
    check_unit(reference, "compute_offset reference");
    const Quat mean = mean_orientation(imu_traj.samples, window_begin, window_end);
    return SegmentFrameOffset{imu_traj.segment_id, reference * conj(mean)};
}

inline OrientationTrajectory apply_offset(const SegmentFrameOffset& offset,
                                          const OrientationTrajectory& traj) {
    if (offset.segment_id != traj.segment_id) {
        throw InvalidArgument("apply_offset: segment id mismatch (" + offset.segment_id + " vs " +
                              traj.segment_id + ")");
    }
    validate_trajectory(traj);
    OrientationTrajectory out;
    out.segment_id = traj.segment_id;
    out.sample_rate = traj.sample_rate;
    out.samples.reserve(traj.samples.size());
    for (const Quat& q : traj.samples) out.samples.push_back(offset.offset * q);
    align_hemisphere(out.samples);
    return out;
}

inline SegmentFrameOffset inverse(const SegmentFrameOffset& offset) {
    return {offset.segment_id, conj(offset.offset)};
}

}  // namespace imuaug
