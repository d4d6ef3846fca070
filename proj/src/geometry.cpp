#include "posebench/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace posebench::geometry {

namespace {

constexpr double kTwoPi = 2.0 * kPi;
constexpr double kHalfPi = 0.5 * kPi;

// |elevation| within this of pi/2 means azimuth/inplane are inseparable.
constexpr double kGimbalMargin = 1e-6;

double require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw NonFiniteError(std::string(what) + " is not finite");
    }
    return v;
}

double clamp_elevation(double e) {
    return std::clamp(e, -kHalfPi, kHalfPi);
}

} // namespace

double wrap_angle(double theta) {
    require_finite(theta, "angle");
    // Bit-preserving fast path. Values already in range must come back
    // unchanged (adding and subtracting pi would cost an ulp), otherwise
    // flip_pose could not be an exact involution.
    if (theta >= -kPi && theta < kPi) return theta;
    double t = std::fmod(theta + kPi, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    if (t >= kTwoPi) t -= kTwoPi; // fp guard: tiny negatives can round up to 2*pi
    return t - kPi;
}

PoseLabel PoseLabel::make(double azimuth, double elevation, double inplane) {
    PoseLabel p;
    p.azimuth = wrap_angle(azimuth);
    p.elevation = clamp_elevation(require_finite(elevation, "elevation"));
    p.inplane = wrap_angle(inplane);
    return p;
}

double PoseLabel::angle(AngleKind kind) const {
    switch (kind) {
    case AngleKind::azimuth: return azimuth;
    case AngleKind::elevation: return elevation;
    case AngleKind::inplane: return inplane;
    }
    return azimuth;
}

RotationMatrix RotationMatrix::identity() {
    RotationMatrix r;
    r.m = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0};
    return r;
}

AngleHeadOutput AngleHeadOutput::zeros() {
    AngleHeadOutput h;
    for (int k = 0; k < 3; ++k) {
        const auto kind = static_cast<AngleKind>(k);
        h.bin_scores[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(bin_count(kind)), 0.0);
        h.bin_offsets[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(bin_count(kind)), 0.0);
    }
    return h;
}

RotationMatrix euler_to_matrix(const PoseLabel& pose) {
    const double ca = std::cos(pose.azimuth), sa = std::sin(pose.azimuth);
    const double cb = std::cos(pose.elevation), sb = std::sin(pose.elevation);
    const double cg = std::cos(pose.inplane), sg = std::sin(pose.inplane);

    // R = Rz(inplane) * Rx(-elevation) * Ry(azimuth)
    RotationMatrix r;
    r.at(0, 0) = cg * ca + sg * sb * sa;
    r.at(0, 1) = -sg * cb;
    r.at(0, 2) = cg * sa - sg * sb * ca;
    r.at(1, 0) = sg * ca - cg * sb * sa;
    r.at(1, 1) = cg * cb;
    r.at(1, 2) = sg * sa + cg * sb * ca;
    r.at(2, 0) = -cb * sa;
    r.at(2, 1) = -sb;
    r.at(2, 2) = cb * ca;
    return r;
}

PoseLabel matrix_to_euler(const RotationMatrix& r) {
    const double sb = std::clamp(-r.at(2, 1), -1.0, 1.0);
    const double elevation = std::asin(sb);
    if (std::abs(elevation) >= kHalfPi - kGimbalMargin) {
        throw GimbalLockError("matrix_to_euler: |elevation| within 1e-6 of pi/2");
    }
    const double azimuth = std::atan2(-r.at(2, 0), r.at(2, 2));
    const double inplane = std::atan2(-r.at(0, 1), r.at(1, 1));
    return PoseLabel::make(azimuth, elevation, inplane);
}

double geodesic_delta(const RotationMatrix& a, const RotationMatrix& b) {
    // Exact-equality fast path: identical rotations are at distance exactly 0
    // (the trace formula would return ~1e-8 of pure roundoff here).
    if (a == b) return 0.0;
    double trace = 0.0; // tr(a^T b) = sum_ij a_ij * b_ij
    for (std::size_t i = 0; i < 9; ++i) {
        trace += a.m[i] * b.m[i];
    }
    const double x = std::clamp(0.5 * (trace - 1.0), -1.0, 1.0);
    return std::acos(x);
}

double normalized_distance(const RotationMatrix& a, const RotationMatrix& b) {
    return geodesic_delta(a, b) / kPi;
}

PoseLabel flip_pose(const PoseLabel& pose) {
    return PoseLabel::make(-pose.azimuth, pose.elevation, -pose.inplane);
}

PoseLabel rotate_inplane(const PoseLabel& pose, double phi) {
    require_finite(phi, "inplane rotation");
    return PoseLabel::make(pose.azimuth, pose.elevation, pose.inplane + phi);
}

BinOffsetCode encode_angle(double theta, AngleKind kind) {
    double t;
    if (kind == AngleKind::elevation) {
        t = clamp_elevation(require_finite(theta, "elevation"));
    } else {
        t = wrap_angle(theta);
    }
    const double scaled = t / kBinWidth;
    const int lo = min_bin(kind);
    const int hi = lo + bin_count(kind) - 1;
    int bin = static_cast<int>(std::floor(scaled));
    bin = std::clamp(bin, lo, hi); // elevation at +pi/2 lands in the top bin with offset 1
    BinOffsetCode code;
    code.kind = kind;
    code.bin = bin;
    code.offset = scaled - bin;
    return code;
}

double decode_code(const BinOffsetCode& code) {
    const double theta = (static_cast<double>(code.bin) + code.offset) * kBinWidth;
    if (code.kind == AngleKind::elevation) {
        return clamp_elevation(theta);
    }
    return wrap_angle(theta);
}

PoseLabel decode_head(const AngleHeadOutput& head) {
    double angles[3];
    for (int k = 0; k < 3; ++k) {
        const auto kind = static_cast<AngleKind>(k);
        const auto& scores = head.bin_scores[static_cast<std::size_t>(k)];
        const auto& offsets = head.bin_offsets[static_cast<std::size_t>(k)];
        if (scores.size() != static_cast<std::size_t>(bin_count(kind)) ||
            offsets.size() != static_cast<std::size_t>(bin_count(kind))) {
            throw ShapeMismatchError("decode_head: head vector size does not match bin count");
        }
        std::size_t best = 0; // ties resolve to the lowest bin index
        for (std::size_t i = 1; i < scores.size(); ++i) {
            if (scores[i] > scores[best]) best = i;
        }
        BinOffsetCode code;
        code.kind = kind;
        code.bin = static_cast<int>(best) + min_bin(kind);
        code.offset = offsets[best];
        angles[k] = decode_code(code);
    }
    return PoseLabel::make(angles[0], angles[1], angles[2]);
}

AngleHeadOutput one_hot_head(const PoseLabel& pose) {
    AngleHeadOutput h = AngleHeadOutput::zeros();
    for (int k = 0; k < 3; ++k) {
        const auto kind = static_cast<AngleKind>(k);
        const BinOffsetCode code = encode_angle(pose.angle(kind), kind);
        const auto vec = static_cast<std::size_t>(code.bin - min_bin(kind));
        auto& offsets = h.bin_offsets[static_cast<std::size_t>(k)];
        offsets.assign(offsets.size(), 0.5);
        h.bin_scores[static_cast<std::size_t>(k)][vec] = 1.0;
        offsets[vec] = code.offset;
    }
    return h;
}

double orthonormality_error(const RotationMatrix& r) {
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double g = 0.0; // (R^T R)_{ij} = column i . column j
            for (int k = 0; k < 3; ++k) {
                g += r.at(k, i) * r.at(k, j);
            }
            worst = std::max(worst, std::abs(g - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

double determinant(const RotationMatrix& r) {
    return r.at(0, 0) * (r.at(1, 1) * r.at(2, 2) - r.at(1, 2) * r.at(2, 1)) -
           r.at(0, 1) * (r.at(1, 0) * r.at(2, 2) - r.at(1, 2) * r.at(2, 0)) +
           r.at(0, 2) * (r.at(1, 0) * r.at(2, 1) - r.at(1, 1) * r.at(2, 0));
}

} // namespace posebench::geometry
