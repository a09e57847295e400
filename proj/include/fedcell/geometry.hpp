#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedcell/random.hpp"

namespace fedcell::geometry {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec2 xy() const { return {x, y}; }
  friend bool operator==(Vec3, Vec3) = default;
};

double dot(Vec2 a, Vec2 b);
double cross(Vec2 a, Vec2 b);
double norm(Vec2 v);
double distance(Vec3 a, Vec3 b);

struct Segment {
  Vec2 a;
  Vec2 b;
};

/// Closed-segment intersection test. Touching endpoints and collinear
/// overlaps count as intersecting.
bool segments_intersect(const Segment& s, const Segment& t);

/// Point-in-polygon for a simple polygon. Points on the boundary are inside.
bool inside_polygon(Vec2 p, std::span<const Vec2> polygon);

/// Closest point to `p` on the polygon boundary.
Vec2 nearest_boundary_point(Vec2 p, std::span<const Vec2> polygon);

/// A room: polygonal floor plan, interior wall panels and cell sites.
struct RoomLayout {
  std::string name;
  std::vector<Vec2> outline;
  std::vector<Segment> panels;
  double height = 0.0;
  std::vector<Vec3> cells;

  /// Outline edges followed by panels; the surfaces UEs bounce off.
  std::vector<Segment> walls() const;
  bool contains(Vec2 p) const { return inside_polygon(p, outline); }
};

/// Checks every layout invariant and throws fedcell::Error describing the
/// first violation.
void validate(const RoomLayout& layout);

/// Parses and validates a JSON layout document.
RoomLayout parse_layout(std::string_view document);
RoomLayout load_layout(const std::filesystem::path& path);

/// True iff the floor projection of a-b crosses no interior panel.
/// The outline never blocks. Touching a panel endpoint counts as blocked.
bool has_los(Vec3 a, Vec3 b, const RoomLayout& layout);

struct MobilityConfig {
  int n_ues = 30;
  double speed = 0.5;         // m per step
  double offset_sigma = 0.5;  // m
  double ue_height = 1.0;     // m
  std::uint64_t seed = 0;
};

void validate(const MobilityConfig& cfg);

using Trajectory = std::vector<Vec3>;

/// Advances one unit of time with specular reflection off outline edges and
/// panels. Returns the new position and velocity.
std::pair<Vec2, Vec2> billiard_step(Vec2 pos, Vec2 vel, const RoomLayout& layout);

/// Adds an N(0, sigma) offset to x and y. Offsets that leave the outline
/// are re-drawn up to 16 times, then the point is clamped just inside the
/// outline.
Vec2 jitter_position(Vec2 base, double sigma, const RoomLayout& layout, Rng& rng);

/// Billiard base motion plus per-step Gaussian (x,y) jitter. One trajectory
/// per UE, each `steps` long. Deterministic in (layout, cfg, steps).
std::vector<Trajectory> generate_trajectories(const RoomLayout& layout,
                                              const MobilityConfig& cfg,
                                              int steps);

}  // namespace fedcell::geometry
