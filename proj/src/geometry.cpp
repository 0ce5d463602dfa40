#include "vln/geometry.hpp"

#include "vln/error.hpp"

#include <algorithm>
#include <string>

namespace vln {

double distance(const Point3& a, const Point3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double horizontal_distance(const Point3& a, const Point3& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

double wrap_heading(double raw) {
    if (!std::isfinite(raw)) throw Error("wrap_heading: non-finite angle");
    double r = std::fmod(raw, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    // fmod of a tiny negative value can round up to exactly 2pi
    if (r >= kTwoPi) r = 0.0;
    return r;
}

double wrap_signed(double raw) {
    double r = wrap_heading(raw);
    if (r > kPi) r -= kTwoPi;
    return r;
}

double clamp_elevation(double raw) {
    if (!std::isfinite(raw)) throw Error("clamp_elevation: non-finite angle");
    return std::clamp(raw, -kPi / 2.0, kPi / 2.0);
}

double bearing(const Point3& from, const Point3& to) {
    const double dx = to.x - from.x;
    const double dy = to.y - from.y;
    if (dx == 0.0 && dy == 0.0) throw Error("bearing: coincident horizontal positions");
    return wrap_heading(std::atan2(dx, dy));
}

Pose::Pose(VertexId viewpoint, double heading, double elevation)
    : viewpoint_(viewpoint), heading_(wrap_heading(heading)), elevation_(clamp_elevation(elevation)) {}

void Pose::set_heading(double h) { heading_ = wrap_heading(h); }

void Pose::set_elevation(double e) { elevation_ = clamp_elevation(e); }

double FrustumSpec::hfov_from(double vfov, double aspect) {
    return 2.0 * std::atan(std::tan(vfov / 2.0) * aspect);
}

double FrustumSpec::default_hfov() { return hfov_from(kPi / 3.0, 640.0 / 480.0); }

double relative_bearing(double heading, const Point3& from, const Point3& to) {
    return wrap_signed(bearing(from, to) - heading);
}

bool in_frustum(double heading, const Point3& from, const Point3& target, const FrustumSpec& spec) {
    return std::abs(relative_bearing(heading, from, target)) <= spec.hfov / 2.0;
}

}  // namespace vln
