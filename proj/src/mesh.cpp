#include "curlcurl/mesh.hpp"

#include "curlcurl/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace curlcurl::mesh {

namespace {

struct ArrayHash
{
  template<std::size_t N>
  std::size_t operator()(const std::array<int, N>& a) const noexcept
  {
    std::size_t h = 1469598103934665603ull;
    for (int v : a) {
      h ^= std::size_t(std::uint32_t(v));
      h *= 1099511628211ull;
    }
    return h;
  }
};

double signed_volume(const std::vector<Eigen::Vector3d>& x, const Tet& t)
{
  const Eigen::Vector3d a = x[t[1]] - x[t[0]], b = x[t[2]] - x[t[0]], c = x[t[3]] - x[t[0]];
  return a.dot(b.cross(c)) / 6;
}

double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c)
{
  return 0.5 * (b - a).cross(c - a).norm();
}

Face sorted_face(int a, int b, int c)
{
  Face f{a, b, c};
  std::sort(f.begin(), f.end());
  return f;
}

Tet sorted(const Tet& t)
{
  Tet s = t;
  std::sort(s.begin(), s.end());
  return s;
}

} // namespace

Tet MeshTopology::sorted_tet(int K) const { return sorted(tets[K]); }

Eigen::Vector3d MeshTopology::tangent(int e) const
{
  return (vertices[edges[e][1]] - vertices[edges[e][0]]).normalized();
}

double MeshTopology::edge_length(int e) const
{
  return (vertices[edges[e][1]] - vertices[edges[e][0]]).norm();
}

double MeshTopology::volume(int K) const { return signed_volume(vertices, tets[K]); }

double MeshTopology::face_area(int f) const
{
  return triangle_area(vertices[faces[f][0]], vertices[faces[f][1]], vertices[faces[f][2]]);
}

bool MeshTopology::is_dirichlet_face(int f) const
{
  auto it = boundary_faces.find(f);
  return it != boundary_faces.end() && it->second == BoundaryLabel::Dirichlet;
}

bool MeshTopology::is_dirichlet_edge(int e) const
{
  for (int K : edge_tets[e])
    for (int f : tet_faces[K]) {
      if (!is_dirichlet_face(f))
        continue;
      const auto& fe = face_edges[f];
      if (std::find(fe.begin(), fe.end(), e) != fe.end())
        return true;
    }
  return false;
}

double MeshTopology::h_max() const
{
  double h = 0;
  for (int e = 0; e < n_edges(); ++e)
    h = std::max(h, edge_length(e));
  return h;
}

MeshTopology build_topology(std::vector<Eigen::Vector3d> vertices, std::vector<Tet> tets,
                            const BoundaryLabels& labels)
{
  MeshTopology m;
  m.vertices = std::move(vertices);
  m.tets = std::move(tets);
  const int nv = m.n_vertices();

  double scale = 0;
  for (const auto& x : m.vertices)
    scale = std::max(scale, x.cwiseAbs().maxCoeff());
  scale = std::max(scale, 1.0);

  for (int K = 0; K < m.n_tets(); ++K) {
    for (int v : m.tets[K])
      if (v < 0 || v >= nv)
        throw NonConforming("cell " + std::to_string(K) + " references vertex " +
                            std::to_string(v));
    const double vol = signed_volume(m.vertices, m.tets[K]);
    if (!(vol > 1e-15 * scale * scale * scale))
      throw InvertedCell("cell " + std::to_string(K) + " has signed volume " +
                         std::to_string(vol));
  }

  std::unordered_map<Edge, int, ArrayHash> edge_id;
  std::unordered_map<Face, int, ArrayHash> face_id;
  const int nt = m.n_tets();
  m.tet_edges.resize(nt);
  m.tet_faces.resize(nt);
  static constexpr int le[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  static constexpr int lf[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
  for (int K = 0; K < nt; ++K) {
    const Tet s = m.sorted_tet(K);
    for (int i = 0; i < 6; ++i) {
      const Edge e{s[le[i][0]], s[le[i][1]]};
      auto [it, inserted] = edge_id.try_emplace(e, m.n_edges());
      if (inserted) {
        m.edges.push_back(e);
        m.edge_tets.emplace_back();
      }
      m.tet_edges[K][i] = it->second;
      m.edge_tets[it->second].push_back(K);
    }
    for (int i = 0; i < 4; ++i) {
      const Face f{s[lf[i][0]], s[lf[i][1]], s[lf[i][2]]};
      auto [it, inserted] = face_id.try_emplace(f, m.n_faces());
      if (inserted) {
        m.faces.push_back(f);
        m.face_tets.push_back({K, -1});
      }
      else {
        auto& ft = m.face_tets[it->second];
        if (ft[1] >= 0)
          throw NonConforming("face (" + std::to_string(f[0]) + "," + std::to_string(f[1]) +
                              "," + std::to_string(f[2]) + ") shared by more than two cells");
        ft[1] = K;
      }
      m.tet_faces[K][i] = it->second;
    }
  }
  m.face_edges.resize(m.n_faces());
  for (int f = 0; f < m.n_faces(); ++f) {
    const auto& v = m.faces[f];
    m.face_edges[f] = {edge_id.at({v[0], v[1]}), edge_id.at({v[0], v[2]}),
                       edge_id.at({v[1], v[2]})};
  }

  for (int f = 0; f < m.n_faces(); ++f) {
    if (!m.is_boundary_face(f))
      continue;
    auto it = labels.find(m.faces[f]);
    if (it == labels.end())
      throw UnlabeledBoundary("boundary face (" + std::to_string(m.faces[f][0]) + "," +
                              std::to_string(m.faces[f][1]) + "," +
                              std::to_string(m.faces[f][2]) + ") has no label");
    m.boundary_faces.emplace(f, it->second);
  }
  for (const auto& [face, label] : labels) {
    auto it = face_id.find(face);
    if (it == face_id.end() || !m.is_boundary_face(it->second))
      throw NonConforming("labelled face (" + std::to_string(face[0]) + "," +
                          std::to_string(face[1]) + "," + std::to_string(face[2]) +
                          ") is not a boundary face");
  }
  return m;
}

BoundaryLabels
label_boundary(const std::vector<Eigen::Vector3d>& vertices, const std::vector<Tet>& tets,
               const std::function<BoundaryLabel(const std::array<Eigen::Vector3d, 3>&)>& label)
{
  std::unordered_map<Face, int, ArrayHash> count;
  for (const auto& t : tets)
    for (int i = 0; i < 4; ++i)
      ++count[sorted_face(t[(i + 1) % 4], t[(i + 2) % 4], t[(i + 3) % 4])];
  BoundaryLabels out;
  for (const auto& [f, c] : count)
    if (c == 1)
      out.emplace(f, label({vertices[f[0]], vertices[f[1]], vertices[f[2]]}));
  return out;
}

MeshTopology
relabel(const MeshTopology& mesh,
        const std::function<BoundaryLabel(const std::array<Eigen::Vector3d, 3>&)>& label)
{
  MeshTopology m = mesh;
  for (auto& [f, l] : m.boundary_faces) {
    const auto& v = m.faces[f];
    l = label({m.vertices[v[0]], m.vertices[v[1]], m.vertices[v[2]]});
  }
  return m;
}

void orient_positively(const std::vector<Eigen::Vector3d>& vertices, std::vector<Tet>& tets)
{
  for (auto& t : tets)
    if (signed_volume(vertices, t) < 0)
      std::swap(t[2], t[3]);
}

CellGeometry geometry_stats(const MeshTopology& mesh, int K)
{
  const auto& t = mesh.tets[K];
  const auto& x = mesh.vertices;
  CellGeometry g;
  g.volume = signed_volume(x, t);
  if (!(g.volume > 0))
    throw InvertedCell("cell " + std::to_string(K));
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      g.h = std::max(g.h, (x[t[i]] - x[t[j]]).norm());
  double area = 0;
  for (int i = 0; i < 4; ++i)
    area += triangle_area(x[t[(i + 1) % 4]], x[t[(i + 2) % 4]], x[t[(i + 3) % 4]]);
  g.rho = 6 * g.volume / area;
  g.kappa = g.h / g.rho;
  return g;
}

EdgePatch edge_patch(const MeshTopology& mesh, int e)
{
  EdgePatch p;
  p.edge = e;
  p.cells = mesh.edge_tets[e];
  std::vector<int> verts;
  p.kappa = std::numeric_limits<double>::infinity();
  for (int K : p.cells) {
    verts.insert(verts.end(), mesh.tets[K].begin(), mesh.tets[K].end());
    p.kappa = std::min(p.kappa, geometry_stats(mesh, K).kappa);
  }
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
  for (std::size_t i = 0; i < verts.size(); ++i)
    for (std::size_t j = i + 1; j < verts.size(); ++j)
      p.h = std::max(p.h, (mesh.vertices[verts[i]] - mesh.vertices[verts[j]]).norm());
  p.dirichlet_edge = mesh.is_dirichlet_edge(e);
  if (p.dirichlet_edge)
    for (int K : p.cells)
      for (int f : mesh.tet_faces[K])
        if (mesh.is_dirichlet_face(f))
          p.gamma_faces.push_back(f);
  return p;
}

ConformityReport check_conformity(const MeshTopology& mesh)
{
  ConformityReport r;
  auto fail = [&](const std::string& msg) {
    if (r.ok) {
      r.ok = false;
      r.message = msg;
    }
  };
  std::vector<int> count(mesh.n_faces(), 0);
  for (int K = 0; K < mesh.n_tets(); ++K) {
    const double v = mesh.volume(K);
    if (!(v > 0))
      fail("non-positive volume in cell " + std::to_string(K));
    r.volume += v;
    for (int f : mesh.tet_faces[K])
      ++count[f];
  }
  for (int f = 0; f < mesh.n_faces(); ++f) {
    if (count[f] < 1 || count[f] > 2)
      fail("face " + std::to_string(f) + " has " + std::to_string(count[f]) + " cells");
    if (count[f] == 1) {
      r.boundary_area += mesh.face_area(f);
      if (!mesh.boundary_faces.count(f))
        fail("boundary face " + std::to_string(f) + " is unlabelled");
    }
  }
  // hanging vertices: a vertex in the relative interior of an edge
  const double h = mesh.h_max();
  Eigen::Vector3d lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const auto& x : mesh.vertices) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  const double cell = std::max(h, 1e-12);
  auto key = [&](const Eigen::Vector3d& x) {
    return std::array<int, 3>{int(std::floor((x[0] - lo[0]) / cell)),
                              int(std::floor((x[1] - lo[1]) / cell)),
                              int(std::floor((x[2] - lo[2]) / cell))};
  };
  std::unordered_map<std::array<int, 3>, std::vector<int>, ArrayHash> grid;
  for (int v = 0; v < mesh.n_vertices(); ++v)
    grid[key(mesh.vertices[v])].push_back(v);
  for (int e = 0; e < mesh.n_edges() && r.ok; ++e) {
    const Eigen::Vector3d a = mesh.vertices[mesh.edges[e][0]];
    const Eigen::Vector3d b = mesh.vertices[mesh.edges[e][1]];
    const Eigen::Vector3d d = b - a;
    const double len2 = d.squaredNorm();
    const auto k = key(0.5 * (a + b));
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j)
        for (int l = -1; l <= 1; ++l) {
          auto it = grid.find({k[0] + i, k[1] + j, k[2] + l});
          if (it == grid.end())
            continue;
          for (int v : it->second) {
            if (v == mesh.edges[e][0] || v == mesh.edges[e][1])
              continue;
            const Eigen::Vector3d w = mesh.vertices[v] - a;
            const double s = w.dot(d) / len2;
            if (s > 1e-9 && s < 1 - 1e-9 && (w - s * d).squaredNorm() < 1e-20 * len2)
              fail("vertex " + std::to_string(v) + " hangs on edge " + std::to_string(e));
          }
        }
  }
  return r;
}

MeshTopology kuhn_mesh(const std::vector<std::array<int, 3>>& cells, int n,
                       const Eigen::Vector3d& origin, double spacing)
{
  // integer lattice coordinates at resolution n per cell
  std::map<std::array<long, 3>, int> index;
  std::vector<std::array<long, 3>> corners;
  std::vector<std::array<std::array<long, 3>, 4>> raw;
  static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                      {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& c : cells)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const std::array<long, 3> base{long(c[0]) * n + i, long(c[1]) * n + j,
                                         long(c[2]) * n + k};
          for (const auto& p : perms) {
            std::array<std::array<long, 3>, 4> t;
            t[0] = base;
            for (int s = 0; s < 3; ++s) {
              t[s + 1] = t[s];
              ++t[s + 1][p[s]];
            }
            raw.push_back(t);
            for (const auto& v : t)
              index.emplace(v, 0);
          }
        }
  // ids increase with (z, y, x) so that every Kuhn path is ascending
  std::vector<std::array<long, 3>> keys;
  for (const auto& [v, _] : index)
    keys.push_back(v);
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
    return std::tie(a[2], a[1], a[0]) < std::tie(b[2], b[1], b[0]);
  });
  std::vector<Eigen::Vector3d> x;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    index[keys[i]] = int(i);
    x.push_back(origin +
                spacing / n * Eigen::Vector3d(double(keys[i][0]), double(keys[i][1]), double(keys[i][2])));
  }
  std::vector<Tet> tets;
  tets.reserve(raw.size());
  for (const auto& t : raw)
    tets.push_back({index[t[0]], index[t[1]], index[t[2]], index[t[3]]});
  orient_positively(x, tets);
  auto labels = label_boundary(x, tets, [](const auto&) { return BoundaryLabel::Dirichlet; });
  return build_topology(std::move(x), std::move(tets), labels);
}

MeshTopology unit_cube_mesh(int n)
{
  if (n < 1)
    throw InvalidConfig("unit_cube_mesh needs n >= 1");
  return kuhn_mesh({{0, 0, 0}}, n, Eigen::Vector3d::Zero(), 1.0);
}

MeshTopology refine_uniform(const MeshTopology& mesh)
{
  std::vector<Eigen::Vector3d> x = mesh.vertices;
  std::vector<int> mid(mesh.n_edges());
  for (int e = 0; e < mesh.n_edges(); ++e) {
    mid[e] = int(x.size());
    x.push_back(0.5 * (mesh.vertices[mesh.edges[e][0]] + mesh.vertices[mesh.edges[e][1]]));
  }
  std::vector<Tet> tets;
  tets.reserve(8 * mesh.tets.size());
  for (int K = 0; K < mesh.n_tets(); ++K) {
    const Tet s = mesh.sorted_tet(K);
    const auto& te = mesh.tet_edges[K];
    const int x0 = s[0], x1 = s[1], x2 = s[2], x3 = s[3];
    const int x01 = mid[te[0]], x02 = mid[te[1]], x03 = mid[te[2]], x12 = mid[te[3]],
              x13 = mid[te[4]], x23 = mid[te[5]];
    tets.push_back({x0, x01, x02, x03});
    tets.push_back({x01, x1, x12, x13});
    tets.push_back({x02, x12, x2, x23});
    tets.push_back({x03, x13, x23, x3});
    // octahedron: cut along its shortest diagonal, ties to the lowest midpoint ids
    const std::array<std::array<int, 2>, 6> pair{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
    const std::array<int, 6> mids{x01, x02, x03, x12, x13, x23};
    static constexpr std::array<std::array<int, 2>, 3> diagonals{{{0, 5}, {1, 4}, {2, 3}}};
    int best = 0;
    double best_len = std::numeric_limits<double>::infinity();
    for (int d = 0; d < 3; ++d) {
      const int p = mids[diagonals[d][0]], q = mids[diagonals[d][1]];
      const double l = (x[p] - x[q]).squaredNorm();
      if (l < best_len * (1 - 1e-12)) {
        best = d;
        best_len = l;
      }
    }
    const int P = mids[diagonals[best][0]], Q = mids[diagonals[best][1]];
    std::vector<int> rest;
    for (int i = 0; i < 6; ++i)
      if (i != diagonals[best][0] && i != diagonals[best][1])
        rest.push_back(i);
    for (std::size_t i = 0; i < rest.size(); ++i)
      for (std::size_t j = i + 1; j < rest.size(); ++j) {
        const auto& a = pair[rest[i]];
        const auto& b = pair[rest[j]];
        const bool adjacent = a[0] == b[0] || a[0] == b[1] || a[1] == b[0] || a[1] == b[1];
        if (adjacent)
          tets.push_back({P, Q, mids[rest[i]], mids[rest[j]]});
      }
  }
  orient_positively(x, tets);
  BoundaryLabels labels;
  for (const auto& [f, label] : mesh.boundary_faces) {
    const auto& v = mesh.faces[f];
    const auto& fe = mesh.face_edges[f]; // (v0v1, v0v2, v1v2)
    const int m01 = mid[fe[0]], m02 = mid[fe[1]], m12 = mid[fe[2]];
    labels.emplace(sorted_face(v[0], m01, m02), label);
    labels.emplace(sorted_face(m01, v[1], m12), label);
    labels.emplace(sorted_face(m02, m12, v[2]), label);
    labels.emplace(sorted_face(m01, m02, m12), label);
  }
  return build_topology(std::move(x), std::move(tets), labels);
}

namespace {

/// Working state of the bisection: a mutable tet soup with edge-to-cell incidence.
class Bisector
{
public:
  Bisector(const MeshTopology& mesh, int max_depth)
    : x_(mesh.vertices), tets_(mesh.tets), max_depth_(max_depth)
  {
    alive_.assign(tets_.size(), true);
    origin_.resize(tets_.size());
    for (std::size_t K = 0; K < tets_.size(); ++K) {
      origin_[K] = int(K);
      attach(int(K));
    }
    for (const auto& [f, l] : mesh.boundary_faces)
      labels_.emplace(mesh.faces[f], l);
  }

  bool alive(int K) const { return alive_[K]; }

  void bisect(int K, int depth)
  {
    if (depth > max_depth_)
      throw ClosureOverflow("bisection closure deeper than " + std::to_string(max_depth_));
    const Edge e = refinement_edge(tets_[K]);
    // make e the refinement edge of every cell around it
    for (;;) {
      int offender = -1;
      for (int T : incident_.at(e))
        if (refinement_edge(tets_[T]) != e) {
          offender = T;
          break;
        }
      if (offender < 0)
        break;
      bisect(offender, depth + 1);
    }
    split(e);
  }

  MeshTopology result(std::vector<int>* parent)
  {
    std::vector<Tet> tets;
    if (parent)
      parent->clear();
    for (std::size_t K = 0; K < tets_.size(); ++K)
      if (alive_[K]) {
        tets.push_back(tets_[K]);
        if (parent)
          parent->push_back(origin_[K]);
      }
    return build_topology(std::move(x_), std::move(tets), labels_);
  }

private:
  static Edge key(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

  double length2(const Edge& e) const { return (x_[e[1]] - x_[e[0]]).squaredNorm(); }

  /// Longest edge; near-ties broken by the vertex ids.
  Edge refinement_edge(const Tet& t) const
  {
    Edge best{-1, -1};
    double best_len = -1;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        const Edge e = key(t[i], t[j]);
        const double l = length2(e);
        const double tol = 1e-10 * std::max(l, best_len);
        if (best_len < 0 || l > best_len + tol ||
            (std::abs(l - best_len) <= tol && e < best)) {
          best = e;
          best_len = l;
        }
      }
    return best;
  }

  void attach(int K)
  {
    const auto& t = tets_[K];
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        incident_[key(t[i], t[j])].push_back(K);
  }

  void detach(int K)
  {
    const auto& t = tets_[K];
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        auto it = incident_.find(key(t[i], t[j]));
        auto& v = it->second;
        v.erase(std::find(v.begin(), v.end(), K));
        if (v.empty())
          incident_.erase(it);
      }
  }

  void split(const Edge& e)
  {
    const int m = int(x_.size());
    x_.push_back(0.5 * (x_[e[0]] + x_[e[1]]));
    const std::vector<int> around = incident_.at(e);
    for (int K : around) {
      const Tet t = tets_[K];
      detach(K);
      alive_[K] = false;
      // the other two vertices
      std::array<int, 2> o{};
      int n = 0;
      for (int v : t)
        if (v != e[0] && v != e[1])
          o[n++] = v;
      for (int c : o) {
        auto it = labels_.find(sorted_face(e[0], e[1], c));
        if (it != labels_.end()) {
          const BoundaryLabel l = it->second;
          labels_.erase(it);
          labels_.emplace(sorted_face(e[0], m, c), l);
          labels_.emplace(sorted_face(m, e[1], c), l);
        }
      }
      for (int keep : {0, 1}) {
        Tet child = t;
        for (auto& v : child)
          if (v == e[keep])
            v = m; // replacing in place keeps the orientation
        tets_.push_back(child);
        alive_.push_back(true);
        origin_.push_back(origin_[K]);
        attach(int(tets_.size()) - 1);
      }
    }
  }

  std::vector<Eigen::Vector3d> x_;
  std::vector<Tet> tets_;
  std::vector<bool> alive_;
  std::vector<int> origin_;
  std::unordered_map<Edge, std::vector<int>, ArrayHash> incident_;
  BoundaryLabels labels_;
  int max_depth_;
};

} // namespace

MeshTopology refine_bisection(const MeshTopology& mesh, const std::vector<int>& marked,
                              int max_depth, std::vector<int>* parent)
{
  if (marked.empty()) {
    if (parent) {
      parent->resize(mesh.n_tets());
      for (int K = 0; K < mesh.n_tets(); ++K)
        (*parent)[K] = K;
    }
    return mesh;
  }
  Bisector b(mesh, max_depth);
  std::vector<int> order = marked;
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  for (int K : order) {
    if (K < 0 || K >= mesh.n_tets())
      throw InvalidConfig("marked cell " + std::to_string(K) + " out of range");
    // a marked cell may already have been split by an earlier closure
    if (b.alive(K))
      b.bisect(K, 0);
  }
  return b.result(parent);
}

} // namespace curlcurl::mesh
