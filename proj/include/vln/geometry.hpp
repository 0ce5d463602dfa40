#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace vln {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
/// Camera rotation applied by the left/right/up/down model actions.
inline constexpr double kTurnStep = kPi / 6.0;

/// Index of a viewpoint inside one navigation graph.
enum class VertexId : std::uint32_t {};

constexpr std::size_t index_of(VertexId v) { return static_cast<std::size_t>(v); }
constexpr VertexId vertex_at(std::size_t i) { return static_cast<VertexId>(i); }

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Point3&, const Point3&) = default;
};

double distance(const Point3& a, const Point3& b);
double horizontal_distance(const Point3& a, const Point3& b);

/// Wraps an angle into [0, 2pi). Throws on non-finite input.
double wrap_heading(double raw);

/// Wraps an angle into (-pi, pi].
double wrap_signed(double raw);

/// Clamps an elevation into [-pi/2, pi/2]. Throws on non-finite input.
double clamp_elevation(double raw);

/// Heading of the horizontal displacement from -> to. 0 points along +Y and
/// angles increase clockwise (towards +X). Throws when the two points share
/// a horizontal position.
double bearing(const Point3& from, const Point3& to);

/// Agent state: viewpoint plus camera heading/elevation. The constructor and
/// setters keep heading wrapped and elevation clamped.
class Pose {
public:
    Pose() = default;
    Pose(VertexId viewpoint, double heading, double elevation = 0.0);

    VertexId viewpoint() const { return viewpoint_; }
    double heading() const { return heading_; }
    double elevation() const { return elevation_; }

    void set_viewpoint(VertexId v) { viewpoint_ = v; }
    void set_heading(double h);
    void set_elevation(double e);

    friend bool operator==(const Pose&, const Pose&) = default;

private:
    VertexId viewpoint_{};
    double heading_ = 0.0;
    double elevation_ = 0.0;
};

/// Horizontal field of view of the camera frustum.
struct FrustumSpec {
    double hfov = default_hfov();

    /// 2 * atan(tan(vfov / 2) * aspect) for a 640x480 image with 60 degree
    /// vertical field of view.
    static double default_hfov();
    static double hfov_from(double vfov, double aspect);
};

/// Signed angle from the pose heading to the target, in (-pi, pi]. Positive
/// values lie to the right (clockwise).
double relative_bearing(double heading, const Point3& from, const Point3& to);

/// True when the target lies between the left and right frustum extents.
/// Elevation plays no part; the boundary is inclusive.
bool in_frustum(double heading, const Point3& from, const Point3& target, const FrustumSpec& spec);

}  // namespace vln
