#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnem/geometry.hpp"

namespace nnem {

/// Mesh edge. Endpoints are stored with v[0] < v[1]; tri[1] is -1 for
/// boundary edges.
struct Edge {
  std::array<int, 2> v{-1, -1};
  std::array<int, 2> tri{-1, -1};
  bool boundary = false;
};

/// Conforming triangular mesh. Triangles are counter-clockwise vertex
/// triples; edges and boundary flags are derived from the triangle list.
struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Edge> edges;
  std::vector<bool> boundary_vertex;
  double h = 0.0;  // mesh size: max edge length
  std::string metadata;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }

  Vec2 vertex_of(int t, int local) const { return vertices[triangles[t][local]]; }

  double signed_area(int t) const {
    const auto& tri = triangles[t];
    const Vec2 a = vertices[tri[0]], b = vertices[tri[1]], c = vertices[tri[2]];
    return 0.5 * cross(b - a, c - a);
  }

  Vec2 centroid(int t) const {
    return (vertex_of(t, 0) + vertex_of(t, 1) + vertex_of(t, 2)) / 3.0;
  }

  /// Local index (0..2) of global vertex v in triangle t, or -1.
  int local_index(int t, int v) const {
    for (int l = 0; l < 3; ++l)
      if (triangles[t][l] == v) return l;
    return -1;
  }

  int interior_edge_count() const {
    int n = 0;
    for (const Edge& e : edges)
      if (!e.boundary) ++n;
    return n;
  }

  int interior_vertex_count() const {
    int n = 0;
    for (bool b : boundary_vertex)
      if (!b) ++n;
    return n;
  }
};

// --- barycentric geometry ---------------------------------------------------

inline double triangle_area(Vec2 a, Vec2 b, Vec2 c) {
  return 0.5 * cross(b - a, c - a);
}

namespace detail {
inline double degeneracy_floor(Vec2 a, Vec2 b, Vec2 c) {
  const double l2 = std::max({dot(b - a, b - a), dot(c - a, c - a), dot(c - b, c - b)});
  return 1e-14 * l2;
}
}  // namespace detail

/// Barycentric coordinates of p in triangle (a,b,c). Affine in p,
/// lambda_i(vertex_j) = delta_ij, components sum to 1.
inline std::array<double, 3> barycentric(Vec2 a, Vec2 b, Vec2 c, Vec2 p) {
  const double det = cross(b - a, c - a);
  if (det <= detail::degeneracy_floor(a, b, c))
    throw std::invalid_argument("barycentric: degenerate or misoriented triangle");
  const double l2 = cross(p - a, c - a) / det;
  const double l3 = cross(b - a, p - a) / det;
  return {1.0 - l2 - l3, l2, l3};
}

/// Constant gradients of the three barycentric coordinates. They sum to zero.
inline std::array<Vec2, 3> barycentric_gradients(Vec2 a, Vec2 b, Vec2 c) {
  const double det = cross(b - a, c - a);
  if (det <= detail::degeneracy_floor(a, b, c))
    throw std::invalid_argument("barycentric_gradients: degenerate or misoriented triangle");
  const Vec2 g2{(c - a).y / det, -(c - a).x / det};
  const Vec2 g3{-(b - a).y / det, (b - a).x / det};
  return {Vec2{-g2.x - g3.x, -g2.y - g3.y}, g2, g3};
}

inline std::array<double, 3> barycentric(const Mesh& mesh, int t, Vec2 p) {
  const auto& tri = mesh.triangles[t];
  return barycentric(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]], p);
}

inline std::array<Vec2, 3> barycentric_gradients(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  return barycentric_gradients(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                               mesh.vertices[tri[2]]);
}

inline Vec2 point_from_barycentric(const Mesh& mesh, int t, const std::array<double, 3>& l) {
  return mesh.vertex_of(t, 0) * l[0] + mesh.vertex_of(t, 1) * l[1] + mesh.vertex_of(t, 2) * l[2];
}

/// Index of a triangle containing p (barycentric coords all >= -tol), or -1.
/// Lowest triangle index wins for points on shared edges.
inline int find_triangle(const Mesh& mesh, Vec2 p, std::array<double, 3>* bary = nullptr,
                         double tol = 1e-12) {
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto l = barycentric(mesh, t, p);
    if (l[0] >= -tol && l[1] >= -tol && l[2] >= -tol) {
      if (bary) *bary = l;
      return t;
    }
  }
  return -1;
}

// --- construction and validation ---------------------------------------------

namespace detail {

inline void build_edges(Mesh& mesh) {
  std::map<std::pair<int, int>, int> edge_of;
  mesh.edges.clear();
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int l = 0; l < 3; ++l) {
      int a = tri[l], b = tri[(l + 1) % 3];
      if (a > b) std::swap(a, b);
      auto [it, fresh] = edge_of.try_emplace({a, b}, mesh.edge_count());
      if (fresh) {
        Edge e;
        e.v = {a, b};
        e.tri = {t, -1};
        mesh.edges.push_back(e);
      } else {
        Edge& e = mesh.edges[it->second];
        if (e.tri[1] != -1)
          throw std::runtime_error("mesh: edge (" + std::to_string(a) + "," + std::to_string(b) +
                                   ") is shared by more than two triangles");
        e.tri[1] = t;
      }
    }
  }
  mesh.boundary_vertex.assign(mesh.vertices.size(), false);
  for (Edge& e : mesh.edges) {
    e.boundary = (e.tri[1] == -1);
    if (e.boundary) {
      mesh.boundary_vertex[e.v[0]] = true;
      mesh.boundary_vertex[e.v[1]] = true;
    }
  }
}

inline double max_edge_length(const Mesh& mesh) {
  double h = 0.0;
  for (const Edge& e : mesh.edges)
    h = std::max(h, distance(mesh.vertices[e.v[0]], mesh.vertices[e.v[1]]));
  return h;
}

}  // namespace detail

/// Assembles a Mesh from raw vertices and CCW triangles: derives edges,
/// boundary flags and h, and rejects misoriented or degenerate triangles.
inline Mesh make_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
                      std::string metadata = {}) {
  Mesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  mesh.metadata = std::move(metadata);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    for (int v : mesh.triangles[t])
      if (v < 0 || v >= mesh.vertex_count())
        throw std::runtime_error("mesh: triangle " + std::to_string(t) +
                                 " references vertex " + std::to_string(v) + " out of range");
  }
  detail::build_edges(mesh);
  mesh.h = detail::max_edge_length(mesh);
  const double area_floor = 1e-14 * mesh.h * mesh.h;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    if (!(mesh.signed_area(t) > area_floor))
      throw std::runtime_error("mesh: triangle " + std::to_string(t) +
                               " has non-positive or degenerate orientation (signed area " +
                               std::to_string(mesh.signed_area(t)) + ")");
  }
  return mesh;
}

/// Full invariant check: orientation, edge adjacency counts, conformity
/// (no vertex in the interior of another triangle's edge), h = max edge scan.
/// Throws std::runtime_error naming the violation.
inline void validate_mesh(const Mesh& mesh) {
  if (mesh.vertices.empty() || mesh.triangles.empty())
    throw std::runtime_error("mesh: empty vertex or triangle list");
  const double area_floor = 1e-14 * mesh.h * mesh.h;
  for (int t = 0; t < mesh.triangle_count(); ++t)
    if (!(mesh.signed_area(t) > area_floor))
      throw std::runtime_error("mesh: triangle " + std::to_string(t) + " fails orientation check");
  for (int e = 0; e < mesh.edge_count(); ++e) {
    const Edge& edge = mesh.edges[e];
    const int adj = (edge.tri[1] == -1) ? 1 : 2;
    if (edge.boundary != (adj == 1))
      throw std::runtime_error("mesh: edge " + std::to_string(e) + " boundary flag inconsistent");
  }
  // Conformity: no vertex strictly inside another edge.
  for (int e = 0; e < mesh.edge_count(); ++e) {
    const Vec2 a = mesh.vertices[mesh.edges[e].v[0]];
    const Vec2 b = mesh.vertices[mesh.edges[e].v[1]];
    const double len2 = dot(b - a, b - a);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
      if (v == mesh.edges[e].v[0] || v == mesh.edges[e].v[1]) continue;
      const Vec2 p = mesh.vertices[v];
      const double t = dot(p - a, b - a) / len2;
      if (t <= 1e-12 || t >= 1.0 - 1e-12) continue;
      const Vec2 foot = a + (b - a) * t;
      if (distance(p, foot) < 1e-12 * mesh.h)
        throw std::runtime_error("mesh: vertex " + std::to_string(v) +
                                 " lies in the interior of edge " + std::to_string(e) +
                                 " (non-conforming)");
    }
  }
  const double scanned = detail::max_edge_length(mesh);
  if (std::abs(scanned - mesh.h) > 1e-13 * scanned)
    throw std::runtime_error("mesh: stored h does not match max edge length");
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    bool touched = false;
    for (const auto& tri : mesh.triangles)
      if (tri[0] == v || tri[1] == v || tri[2] == v) touched = true;
    if (!touched)
      throw std::runtime_error("mesh: vertex " + std::to_string(v) + " is unused");
  }
}

// --- generators ---------------------------------------------------------------

/// Structured n x n mesh of the unit square; every cell is split along the
/// lower-left to upper-right diagonal. (n+1)^2 vertices, 2n^2 triangles,
/// h = sqrt(2)/n.
inline Mesh generate_unit_square(int n) {
  if (n < 1) throw std::invalid_argument("generate_unit_square: n must be >= 1");
  std::vector<Vec2> vertices;
  vertices.reserve(static_cast<size_t>(n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(static_cast<size_t>(2) * n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  Mesh mesh = make_mesh(std::move(vertices), std::move(triangles),
                        "unit_square n=" + std::to_string(n) + " diagonal=lower_left_upper_right");
  mesh.h = std::sqrt(2.0) / n;  // closed form; refinement halves it exactly
  return mesh;
}

/// L-shaped domain [0,2]^2 minus the closed upper-right unit square, with n
/// cells per unit leg. The n=1 topology is six triangles (three unit cells,
/// the lower-left cell split along its anti-diagonal); larger n refines each
/// base triangle into n^2 similar ones.
inline Mesh generate_l_shape(int n) {
  if (n < 1) throw std::invalid_argument("generate_l_shape: n must be >= 1");
  // Base vertices on the integer lattice, matching the six-triangle layout.
  const std::array<std::array<int, 2>, 8> base_v = {{
      {0, 0}, {1, 0}, {2, 0}, {0, 1}, {1, 1}, {2, 1}, {0, 2}, {1, 2}}};
  // CCW base triangles: upper-left cell, lower-left cell (anti-diagonal),
  // lower-right cell.
  const std::array<std::array<int, 3>, 6> base_t = {{
      {3, 7, 6},   // (0,1) (1,2) (0,2)
      {3, 4, 7},   // (0,1) (1,1) (1,2)
      {3, 1, 4},   // (0,1) (1,0) (1,1)
      {0, 1, 3},   // (0,0) (1,0) (0,1)
      {1, 5, 4},   // (1,0) (2,1) (1,1)
      {1, 2, 5}}}; // (1,0) (2,0) (2,1)

  std::map<std::pair<int, int>, int> vertex_of;  // lattice (x*n, y*n) -> id
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  auto lattice_id = [&](int lx, int ly) {
    auto [it, fresh] = vertex_of.try_emplace({lx, ly}, static_cast<int>(vertices.size()));
    if (fresh)
      vertices.push_back({static_cast<double>(lx) / n, static_cast<double>(ly) / n});
    return it->second;
  };
  for (const auto& bt : base_t) {
    const std::array<int, 2> L1 = {base_v[bt[0]][0] * n, base_v[bt[0]][1] * n};
    const std::array<int, 2> L2 = {base_v[bt[1]][0] * n, base_v[bt[1]][1] * n};
    const std::array<int, 2> L3 = {base_v[bt[2]][0] * n, base_v[bt[2]][1] * n};
    auto sub = [&](int i, int j) {  // lattice point L1 + (i/n)(L2-L1) + (j/n)(L3-L1)
      const int lx = L1[0] + (L2[0] - L1[0]) * i / n + (L3[0] - L1[0]) * j / n;
      const int ly = L1[1] + (L2[1] - L1[1]) * i / n + (L3[1] - L1[1]) * j / n;
      return lattice_id(lx, ly);
    };
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i + j < n; ++i) {
        triangles.push_back({sub(i, j), sub(i + 1, j), sub(i, j + 1)});
        if (i + j < n - 1)
          triangles.push_back({sub(i + 1, j), sub(i + 1, j + 1), sub(i, j + 1)});
      }
    }
  }
  Mesh mesh = make_mesh(std::move(vertices), std::move(triangles),
                        "l_shape n=" + std::to_string(n));
  mesh.h = std::sqrt(2.0) / n;
  return mesh;
}

// --- text format `nnem-mesh v1` -------------------------------------------------

/// Serializes to the `nnem-mesh v1` text format at full double precision.
inline std::string save_mesh(const Mesh& mesh) {
  std::string out = "nnem-mesh v1\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "vertices %d\n", mesh.vertex_count());
  out += buf;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %d\n", mesh.vertices[v].x, mesh.vertices[v].y,
                  mesh.boundary_vertex[v] ? 1 : 0);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "triangles %d\n", mesh.triangle_count());
  out += buf;
  for (const auto& t : mesh.triangles) {
    std::snprintf(buf, sizeof buf, "%d %d %d\n", t[0], t[1], t[2]);
    out += buf;
  }
  return out;
}

/// Parses the `nnem-mesh v1` format and validates all mesh invariants.
/// Boundary flags are recomputed from adjacency and cross-checked against
/// the file's flags.
inline Mesh load_mesh(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> std::string& {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return line;
    }
    throw std::runtime_error("mesh parse error at line " + std::to_string(lineno + 1) +
                             ": unexpected end of file");
  };
  if (next_line() != "nnem-mesh v1")
    throw std::runtime_error("mesh parse error at line 1: expected header 'nnem-mesh v1'");

  auto parse_count = [&](const std::string& keyword) {
    std::istringstream ls(next_line());
    std::string kw;
    long long count = -1;
    if (!(ls >> kw >> count) || kw != keyword || count < 0)
      throw std::runtime_error("mesh parse error at line " + std::to_string(lineno) +
                               ": expected '" + keyword + " <count>'");
    return static_cast<int>(count);
  };

  const int nv = parse_count("vertices");
  std::vector<Vec2> vertices(nv);
  std::vector<bool> declared_boundary(nv);
  for (int v = 0; v < nv; ++v) {
    std::istringstream ls(next_line());
    int flag = -1;
    if (!(ls >> vertices[v].x >> vertices[v].y >> flag) || (flag != 0 && flag != 1))
      throw std::runtime_error("mesh parse error at line " + std::to_string(lineno) +
                               ": expected 'x y b' with b in {0,1}");
    declared_boundary[v] = (flag == 1);
  }
  const int nt = parse_count("triangles");
  std::vector<std::array<int, 3>> triangles(nt);
  for (int t = 0; t < nt; ++t) {
    std::istringstream ls(next_line());
    if (!(ls >> triangles[t][0] >> triangles[t][1] >> triangles[t][2]))
      throw std::runtime_error("mesh parse error at line " + std::to_string(lineno) +
                               ": expected 'i j k'");
  }
  Mesh mesh = make_mesh(std::move(vertices), std::move(triangles), "loaded");
  validate_mesh(mesh);
  for (int v = 0; v < nv; ++v) {
    if (mesh.boundary_vertex[v] != declared_boundary[v])
      throw std::runtime_error("mesh validation error: declared boundary flag of vertex " +
                               std::to_string(v) + " disagrees with edge adjacency");
  }
  return mesh;
}

// --- patches ---------------------------------------------------------------------

enum class PatchKind { vertex, edge, element };

/// Support patch of a degree of freedom: the member triangles plus, per
/// triangle, the local indices of the carrier vertices. For a vertex patch
/// local[m][0] is the carrier's local index; for an edge patch local[m] are
/// the local indices of the edge endpoints in ascending global order.
struct Patch {
  PatchKind kind = PatchKind::element;
  int carrier = -1;
  std::vector<int> tris;
  std::vector<std::array<int, 2>> local;
  double diameter = 0.0;

  int position(int t) const {
    for (size_t m = 0; m < tris.size(); ++m)
      if (tris[m] == t) return static_cast<int>(m);
    return -1;
  }
  bool contains(int t) const { return position(t) >= 0; }
};

struct Patches {
  std::vector<Patch> vertex;
  std::vector<Patch> edge;
  std::vector<Patch> element;
};

namespace detail {
inline double patch_diameter(const Mesh& mesh, const std::vector<int>& tris) {
  std::vector<int> vs;
  for (int t : tris)
    for (int v : mesh.triangles[t]) vs.push_back(v);
  std::sort(vs.begin(), vs.end());
  vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
  double d = 0.0;
  for (size_t i = 0; i < vs.size(); ++i)
    for (size_t j = i + 1; j < vs.size(); ++j)
      d = std::max(d, distance(mesh.vertices[vs[i]], mesh.vertices[vs[j]]));
  return d;
}
}  // namespace detail

/// Builds the vertex patches (all triangles sharing the vertex), edge patches
/// (the 1-2 adjacent triangles) and single-triangle element patches, with the
/// carrier's local numbering recorded per member triangle.
inline Patches build_patches(const Mesh& mesh) {
  Patches out;
  out.vertex.resize(mesh.vertex_count());
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    Patch& p = out.vertex[v];
    p.kind = PatchKind::vertex;
    p.carrier = v;
  }
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    for (int l = 0; l < 3; ++l) {
      Patch& p = out.vertex[mesh.triangles[t][l]];
      p.tris.push_back(t);
      p.local.push_back({l, -1});
    }
  }
  out.edge.resize(mesh.edge_count());
  for (int e = 0; e < mesh.edge_count(); ++e) {
    Patch& p = out.edge[e];
    p.kind = PatchKind::edge;
    p.carrier = e;
    for (int side = 0; side < 2; ++side) {
      const int t = mesh.edges[e].tri[side];
      if (t < 0) continue;
      p.tris.push_back(t);
      p.local.push_back({mesh.local_index(t, mesh.edges[e].v[0]),
                         mesh.local_index(t, mesh.edges[e].v[1])});
    }
  }
  out.element.resize(mesh.triangle_count());
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    Patch& p = out.element[t];
    p.kind = PatchKind::element;
    p.carrier = t;
    p.tris = {t};
    p.local = {{0, 1}};
  }
  for (Patch& p : out.vertex) p.diameter = detail::patch_diameter(mesh, p.tris);
  for (Patch& p : out.edge) p.diameter = detail::patch_diameter(mesh, p.tris);
  for (Patch& p : out.element) p.diameter = detail::patch_diameter(mesh, p.tris);
  return out;
}

/// Pointwise overlap bound: the maximum, over triangles, of how many of the
/// given supports contain that triangle. Equals the cover cardinality at any
/// point interior to an element.
inline int overlap_bound(const Mesh& mesh, const std::vector<const Patch*>& supports) {
  std::vector<int> count(mesh.triangle_count(), 0);
  for (const Patch* p : supports)
    for (int t : p->tris) ++count[t];
  int m = 0;
  for (int c : count) m = std::max(m, c);
  return m;
}

// --- mesh quality -----------------------------------------------------------------

inline double min_angle_deg(const Mesh& mesh) {
  double worst = 180.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    for (int l = 0; l < 3; ++l) {
      const Vec2 a = mesh.vertex_of(t, l), b = mesh.vertex_of(t, (l + 1) % 3),
                 c = mesh.vertex_of(t, (l + 2) % 3);
      const double ang =
          std::acos(std::clamp(dot(b - a, c - a) / (norm(b - a) * norm(c - a)), -1.0, 1.0));
      worst = std::min(worst, ang * 180.0 / std::acos(-1.0));
    }
  }
  return worst;
}

/// Shape regularity: max over elements of diameter / inradius.
inline double shape_regularity(const Mesh& mesh) {
  double worst = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const Vec2 a = mesh.vertex_of(t, 0), b = mesh.vertex_of(t, 1), c = mesh.vertex_of(t, 2);
    const double la = distance(b, c), lb = distance(a, c), lc = distance(a, b);
    const double inradius = 2.0 * mesh.signed_area(t) / (la + lb + lc);
    worst = std::max(worst, std::max({la, lb, lc}) / inradius);
  }
  return worst;
}

}  // namespace nnem
