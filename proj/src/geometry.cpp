#include "fedcell/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "fedcell/error.hpp"

namespace fedcell::geometry {

namespace {

constexpr double kBoundaryEps = 1e-12;
constexpr int kJitterAttempts = 16;
constexpr int kMaxBounces = 64;

int orientation(Vec2 a, Vec2 b, Vec2 c) {
  const double v = cross(b - a, c - a);
  if (v > 0) return 1;
  if (v < 0) return -1;
  return 0;
}

// c collinear with a-b: is it within the bounding box of a-b?
bool on_segment(Vec2 a, Vec2 b, Vec2 c) {
  return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
         c.y <= std::max(a.y, b.y);
}

double point_segment_distance(Vec2 p, const Segment& s, Vec2* closest) {
  const Vec2 d = s.b - s.a;
  const double len2 = dot(d, d);
  double t = len2 > 0 ? dot(p - s.a, d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 c = s.a + t * d;
  if (closest != nullptr) *closest = c;
  return norm(p - c);
}

bool on_boundary(Vec2 p, std::span<const Vec2> polygon) {
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Segment e{polygon[i], polygon[(i + 1) % polygon.size()]};
    if (point_segment_distance(p, e, nullptr) <= kBoundaryEps) return true;
  }
  return false;
}

double signed_area(std::span<const Vec2> polygon) {
  double a = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    a += cross(polygon[i], polygon[(i + 1) % polygon.size()]);
  }
  return 0.5 * a;
}

Vec2 reflect(Vec2 v, const Segment& wall) {
  const Vec2 d = wall.b - wall.a;
  const double len = norm(d);
  const Vec2 n{-d.y / len, d.x / len};
  return v - (2.0 * dot(v, n)) * n;
}

Vec2 parse_point2(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw Error(where + ": expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 v) { return std::hypot(v.x, v.y); }

double distance(Vec3 a, Vec3 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool segments_intersect(const Segment& s, const Segment& t) {
  const int o1 = orientation(s.a, s.b, t.a);
  const int o2 = orientation(s.a, s.b, t.b);
  const int o3 = orientation(t.a, t.b, s.a);
  const int o4 = orientation(t.a, t.b, s.b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(s.a, s.b, t.a)) return true;
  if (o2 == 0 && on_segment(s.a, s.b, t.b)) return true;
  if (o3 == 0 && on_segment(t.a, t.b, s.a)) return true;
  if (o4 == 0 && on_segment(t.a, t.b, s.b)) return true;
  return false;
}

bool inside_polygon(Vec2 p, std::span<const Vec2> polygon) {
  if (polygon.size() < 3) return false;
  if (on_boundary(p, polygon)) return true;
  bool inside = false;
  for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
    const Vec2 a = polygon[i];
    const Vec2 b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

Vec2 nearest_boundary_point(Vec2 p, std::span<const Vec2> polygon) {
  Vec2 best = polygon.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    Vec2 c;
    const double d = point_segment_distance(p, {polygon[i], polygon[(i + 1) % polygon.size()]}, &c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<Segment> RoomLayout::walls() const {
  std::vector<Segment> out;
  out.reserve(outline.size() + panels.size());
  for (std::size_t i = 0; i < outline.size(); ++i) {
    out.push_back({outline[i], outline[(i + 1) % outline.size()]});
  }
  out.insert(out.end(), panels.begin(), panels.end());
  return out;
}

void validate(const RoomLayout& layout) {
  const auto& poly = layout.outline;
  const std::string who = "layout '" + layout.name + "'";
  if (poly.size() < 3) throw Error(who + ": outline needs at least 3 vertices");
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (poly[i] == poly[(i + 1) % n]) {
      throw Error(who + ": zero-length outline edge at vertex " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Segment ei{poly[i], poly[(i + 1) % n]};
    for (std::size_t j = i + 1; j < n; ++j) {
      const Segment ej{poly[j], poly[(j + 1) % n]};
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges may only share their common vertex.
        const Vec2 shared = (j == i + 1) ? ei.b : ei.a;
        const Vec2 other_i = (j == i + 1) ? ei.a : ei.b;
        const Vec2 other_j = (j == i + 1) ? ej.b : ej.a;
        if (orientation(other_i, shared, other_j) == 0 &&
            dot(other_i - shared, other_j - shared) > 0) {
          throw Error(who + ": outline folds back on itself at vertex " + std::to_string(j % n));
        }
        continue;
      }
      if (segments_intersect(ei, ej)) {
        throw Error(who + ": outline is self-intersecting (edges " + std::to_string(i) + " and " +
                    std::to_string(j) + ")");
      }
    }
  }
  if (std::abs(signed_area(poly)) <= 0.0) throw Error(who + ": outline has empty interior");
  if (!(layout.height > 0.0)) throw Error(who + ": height must be positive");

  for (std::size_t k = 0; k < layout.panels.size(); ++k) {
    const Segment& p = layout.panels[k];
    const std::string pw = who + ": panel " + std::to_string(k);
    if (p.a == p.b) throw Error(pw + " has zero length");
    if (!layout.contains(p.a) || !layout.contains(p.b) || !layout.contains(0.5 * (p.a + p.b))) {
      throw Error(pw + " lies outside the outline");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = poly[i];
      const Vec2 b = poly[(i + 1) % n];
      const int o1 = orientation(a, b, p.a);
      const int o2 = orientation(a, b, p.b);
      const int o3 = orientation(p.a, p.b, a);
      const int o4 = orientation(p.a, p.b, b);
      if (o1 * o2 < 0 && o3 * o4 < 0) throw Error(pw + " crosses the outline");
    }
  }
  if (layout.cells.empty()) throw Error(who + ": at least one cell is required");
  for (std::size_t k = 0; k < layout.cells.size(); ++k) {
    const Vec3 c = layout.cells[k];
    if (!layout.contains(c.xy()) || !(c.z > 0.0) || c.z > layout.height) {
      std::ostringstream os;
      os << who << ": cell " << k << " at (" << c.x << ", " << c.y << ", " << c.z
         << ") is outside the room";
      throw Error(os.str());
    }
  }
}

RoomLayout parse_layout(std::string_view document) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("malformed layout document: ") + e.what());
  }
  if (!j.is_object()) throw Error("malformed layout document: expected an object");
  for (const char* key : {"name", "outline", "panels", "height", "cells"}) {
    if (!j.contains(key)) throw Error(std::string("layout document missing key '") + key + "'");
  }
  RoomLayout layout;
  if (!j["name"].is_string()) throw Error("layout.name must be a string");
  layout.name = j["name"].get<std::string>();
  if (!j["height"].is_number()) throw Error("layout.height must be a number");
  layout.height = j["height"].get<double>();

  if (!j["outline"].is_array()) throw Error("layout.outline must be a list of [x, y]");
  for (std::size_t i = 0; i < j["outline"].size(); ++i) {
    layout.outline.push_back(parse_point2(j["outline"][i], "outline[" + std::to_string(i) + "]"));
  }
  if (!j["panels"].is_array()) throw Error("layout.panels must be a list of [[x1,y1],[x2,y2]]");
  for (std::size_t i = 0; i < j["panels"].size(); ++i) {
    const auto& pj = j["panels"][i];
    const std::string where = "panels[" + std::to_string(i) + "]";
    if (!pj.is_array() || pj.size() != 2) throw Error(where + ": expected [[x1,y1],[x2,y2]]");
    layout.panels.push_back({parse_point2(pj[0], where), parse_point2(pj[1], where)});
  }
  if (!j["cells"].is_array()) throw Error("layout.cells must be a list of [x, y, z]");
  for (std::size_t i = 0; i < j["cells"].size(); ++i) {
    const auto& cj = j["cells"][i];
    if (!cj.is_array() || cj.size() != 3 || !cj[0].is_number() || !cj[1].is_number() ||
        !cj[2].is_number()) {
      throw Error("cells[" + std::to_string(i) + "]: expected [x, y, z]");
    }
    layout.cells.push_back({cj[0].get<double>(), cj[1].get<double>(), cj[2].get<double>()});
  }
  validate(layout);
  return layout;
}

RoomLayout load_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open layout file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_layout(buf.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

bool has_los(Vec3 a, Vec3 b, const RoomLayout& layout) {
  const Segment link{a.xy(), b.xy()};
  return std::none_of(layout.panels.begin(), layout.panels.end(),
                      [&](const Segment& p) { return segments_intersect(link, p); });
}

void validate(const MobilityConfig& cfg) {
  if (cfg.n_ues < 1) throw Error("mobility.n_ues must be >= 1");
  if (!(cfg.speed > 0.0)) throw Error("mobility.speed must be > 0");
  if (!(cfg.offset_sigma >= 0.0)) throw Error("mobility.offset_sigma must be >= 0");
  if (!(cfg.ue_height > 0.0)) throw Error("mobility.ue_height must be > 0");
}

std::pair<Vec2, Vec2> billiard_step(Vec2 pos, Vec2 vel, const RoomLayout& layout) {
  const std::vector<Segment> walls = layout.walls();
  Vec2 p = pos;
  Vec2 v = vel;
  double remaining = 1.0;
  std::vector<std::size_t> just_hit;

  for (int bounce = 0; bounce < kMaxBounces && remaining > 0.0; ++bounce) {
    const Vec2 move = remaining * v;
    double s_min = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> hits;
    for (std::size_t w = 0; w < walls.size(); ++w) {
      if (std::find(just_hit.begin(), just_hit.end(), w) != just_hit.end()) continue;
      const Vec2 e = walls[w].b - walls[w].a;
      const double denom = cross(move, e);
      if (denom == 0.0) continue;  // parallel
      const Vec2 ap = walls[w].a - p;
      const double s = cross(ap, e) / denom;
      const double u = cross(ap, move) / denom;
      if (s <= kBoundaryEps || s > 1.0 || u < -kBoundaryEps || u > 1.0 + kBoundaryEps) continue;
      if (s < s_min - kBoundaryEps) {
        s_min = s;
        hits.assign(1, w);
      } else if (std::abs(s - s_min) <= kBoundaryEps) {
        hits.push_back(w);
      }
    }
    if (hits.empty()) {
      p = p + move;
      remaining = 0.0;
      break;
    }
    p = p + s_min * move;
    for (std::size_t w : hits) v = reflect(v, walls[w]);
    remaining *= (1.0 - s_min);
    just_hit = std::move(hits);
  }

  if (!layout.contains(p)) p = pos;  // numerical leak: hold position, keep new heading
  return {p, v};
}

Vec2 jitter_position(Vec2 base, double sigma, const RoomLayout& layout, Rng& rng) {
  if (sigma == 0.0) return base;
  std::normal_distribution<double> offset(0.0, sigma);
  Vec2 candidate = base;
  for (int attempt = 0; attempt < kJitterAttempts; ++attempt) {
    const double dx = offset(rng);
    const double dy = offset(rng);
    candidate = {base.x + dx, base.y + dy};
    if (layout.contains(candidate)) return candidate;
  }
  // Clamp: nearest outline point, nudged toward the base position.
  const Vec2 edge = nearest_boundary_point(candidate, layout.outline);
  const Vec2 toward = base - edge;
  const double len = norm(toward);
  const Vec2 clamped = len > 0 ? edge + (std::min(1e-6, len) / len) * toward : base;
  return layout.contains(clamped) ? clamped : base;
}

std::vector<Trajectory> generate_trajectories(const RoomLayout& layout, const MobilityConfig& cfg,
                                              int steps) {
  if (steps < 1) throw Error("generate_trajectories: steps must be >= 1");
  validate(cfg);
  if (layout.outline.size() < 3 || std::abs(signed_area(layout.outline)) <= 0.0) {
    throw Error("generate_trajectories: layout '" + layout.name + "' has empty interior");
  }
  double min_x = layout.outline[0].x, max_x = min_x;
  double min_y = layout.outline[0].y, max_y = min_y;
  for (Vec2 v : layout.outline) {
    min_x = std::min(min_x, v.x);
    max_x = std::max(max_x, v.x);
    min_y = std::min(min_y, v.y);
    max_y = std::max(max_y, v.y);
  }

  std::vector<Trajectory> out;
  out.reserve(cfg.n_ues);
  for (int ue = 0; ue < cfg.n_ues; ++ue) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(ue));
    std::uniform_real_distribution<double> ux(min_x, max_x);
    std::uniform_real_distribution<double> uy(min_y, max_y);
    Vec2 base;
    bool placed = false;
    for (int tries = 0; tries < 100000 && !placed; ++tries) {
      base = {ux(rng), uy(rng)};
      placed = layout.contains(base) && !on_boundary(base, layout.outline);
    }
    if (!placed) throw Error("generate_trajectories: could not place a UE inside " + layout.name);
    const double heading = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    Vec2 vel{cfg.speed * std::cos(heading), cfg.speed * std::sin(heading)};

    Trajectory traj;
    traj.reserve(steps);
    for (int t = 0; t < steps; ++t) {
      const Vec2 p = jitter_position(base, cfg.offset_sigma, layout, rng);
      traj.push_back({p.x, p.y, cfg.ue_height});
      std::tie(base, vel) = billiard_step(base, vel, layout);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace fedcell::geometry
