#pragma once

#include <array>
#include <vector>

#include "posebench/errors.hpp"

namespace posebench::geometry {

inline constexpr double kPi = 3.14159265358979323846;

// Shared bin width for all three angles: 15 degrees.
inline constexpr double kBinWidth = kPi / 12.0;

enum class AngleKind { azimuth = 0, elevation = 1, inplane = 2 };

inline constexpr int kAzimuthBins = 24;   // bins -12..11 over [-pi, pi)
inline constexpr int kElevationBins = 12; // bins  -6..5  over [-pi/2, pi/2]
inline constexpr int kInplaneBins = 24;   // bins -12..11 over [-pi, pi)

// Width of one concatenated score (or offset) row: azimuth | elevation | inplane.
inline constexpr int kScoreDim = kAzimuthBins + kElevationBins + kInplaneBins;

constexpr int bin_count(AngleKind kind) {
    return kind == AngleKind::elevation ? kElevationBins : kAzimuthBins;
}

constexpr int min_bin(AngleKind kind) {
    return kind == AngleKind::elevation ? -6 : -12;
}

// Start of this angle's slice within a kScoreDim-wide row.
constexpr int score_offset(AngleKind kind) {
    switch (kind) {
    case AngleKind::azimuth: return 0;
    case AngleKind::elevation: return kAzimuthBins;
    case AngleKind::inplane: return kAzimuthBins + kElevationBins;
    }
    return 0;
}

constexpr double deg2rad(double d) { return d * (kPi / 180.0); }
constexpr double rad2deg(double r) { return r * (180.0 / kPi); }

// Wrap into [-pi, pi). Throws NonFiniteError on NaN/Inf.
double wrap_angle(double theta);

// Euler pose. azimuth and inplane live in [-pi, pi), elevation in
// [-pi/2, pi/2]; construct through make() to establish those ranges.
struct PoseLabel {
    double azimuth = 0.0;
    double elevation = 0.0;
    double inplane = 0.0;

    static PoseLabel make(double azimuth, double elevation, double inplane);
    double angle(AngleKind kind) const;
};

// Row-major 3x3 rotation matrix.
struct RotationMatrix {
    std::array<double, 9> m{};

    double at(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }
    double& at(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }

    static RotationMatrix identity();
    bool operator==(const RotationMatrix& other) const { return m == other.m; }
};

// Classification bin plus within-bin offset for one angle.
// decode: angle = (bin + offset) * kBinWidth. offset is in [0, 1].
struct BinOffsetCode {
    AngleKind kind = AngleKind::azimuth;
    int bin = 0;
    double offset = 0.0;
};

// Raw prediction-head view of one sample: pre-softmax bin scores and squashed
// in-bin offsets per angle (sizes 24 / 12 / 24, indexed by AngleKind).
// Entry i of a vector is bin (i + min_bin(kind)).
struct AngleHeadOutput {
    std::array<std::vector<double>, 3> bin_scores;
    std::array<std::vector<double>, 3> bin_offsets;

    static AngleHeadOutput zeros();
};

// R = Rz(inplane) * Rx(-elevation) * Ry(azimuth).
RotationMatrix euler_to_matrix(const PoseLabel& pose);

// Inverse of euler_to_matrix. Throws GimbalLockError when |elevation| is
// within 1e-6 of pi/2 (azimuth and inplane are no longer separable).
PoseLabel matrix_to_euler(const RotationMatrix& r);

// Geodesic angle between rotations: arccos((tr(a^T b) - 1) / 2), argument
// clamped to [-1, 1]. Bit-identical matrices return exactly 0.
double geodesic_delta(const RotationMatrix& a, const RotationMatrix& b);

// geodesic_delta / pi, in [0, 1].
double normalized_distance(const RotationMatrix& a, const RotationMatrix& b);

// Mirror-image pose: (azimuth, elevation, inplane) -> (-az, el, -in).
PoseLabel flip_pose(const PoseLabel& pose);

// Add phi to the in-plane angle and re-wrap.
PoseLabel rotate_inplane(const PoseLabel& pose, double phi);

// Quantize one angle (wrapped/clamped into its legal range first).
BinOffsetCode encode_angle(double theta, AngleKind kind);

// (bin + offset) * kBinWidth, wrapped (azimuth/inplane) or clamped (elevation)
// back into the angle's legal range.
double decode_code(const BinOffsetCode& code);

// Argmax bin per angle (lowest index wins ties) + that bin's offset.
PoseLabel decode_head(const AngleHeadOutput& head);

// Head that decodes exactly to `pose`: score 1 at the target bin (0
// elsewhere), the encoded offset at the target bin (0.5 elsewhere).
AngleHeadOutput one_hot_head(const PoseLabel& pose);

// max |(R^T R - I)_ij|; diagnostic for rotation-matrix health.
double orthonormality_error(const RotationMatrix& r);

double determinant(const RotationMatrix& r);

} // namespace posebench::geometry
