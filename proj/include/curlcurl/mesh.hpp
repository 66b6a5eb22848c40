#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace curlcurl::mesh {

enum class BoundaryLabel { Dirichlet, Neumann };

using Tet = std::array<int, 4>;
using Edge = std::array<int, 2>;
using Face = std::array<int, 3>;
using BoundaryLabels = std::map<Face, BoundaryLabel>;

/// Conforming tetrahedral mesh. Immutable once built; refinement returns a new mesh.
///
/// Edges store the lower vertex id first; faces store ascending ids. tet_edges and
/// tet_faces follow the local numbering of the cell's vertices sorted by global id:
/// edges (0,1),(0,2),(0,3),(1,2),(1,3),(2,3) and face i opposite sorted vertex i.
struct MeshTopology
{
  std::vector<Eigen::Vector3d> vertices;
  std::vector<Tet> tets; // positively oriented
  std::vector<Edge> edges;
  std::vector<Face> faces;
  std::map<int, BoundaryLabel> boundary_faces;

  std::vector<std::array<int, 6>> tet_edges;
  std::vector<std::array<int, 4>> tet_faces;
  std::vector<std::vector<int>> edge_tets;
  std::vector<std::array<int, 2>> face_tets; // second entry -1 on the boundary
  std::vector<std::array<int, 3>> face_edges;

  int n_vertices() const { return int(vertices.size()); }
  int n_tets() const { return int(tets.size()); }
  int n_edges() const { return int(edges.size()); }
  int n_faces() const { return int(faces.size()); }

  /// Vertices of cell K in ascending global id.
  Tet sorted_tet(int K) const;
  /// Unit tangent from the lower to the higher vertex id.
  Eigen::Vector3d tangent(int e) const;
  double edge_length(int e) const;
  double volume(int K) const;
  double face_area(int f) const;
  bool is_boundary_face(int f) const { return face_tets[f][1] < 0; }
  bool is_dirichlet_face(int f) const;
  /// True iff some Dirichlet face contains the edge.
  bool is_dirichlet_edge(int e) const;
  double h_max() const;
};

/// Builds incidence. Throws NonConforming, UnlabeledBoundary or InvertedCell.
MeshTopology build_topology(std::vector<Eigen::Vector3d> vertices, std::vector<Tet> tets,
                            const BoundaryLabels& labels);

/// Labels every topological boundary face of the tet list by a callback on the face
/// vertex coordinates.
BoundaryLabels label_boundary(const std::vector<Eigen::Vector3d>& vertices,
                              const std::vector<Tet>& tets,
                              const std::function<BoundaryLabel(const std::array<Eigen::Vector3d, 3>&)>& label);

/// Same mesh with boundary labels reassigned by a callback.
MeshTopology relabel(const MeshTopology& mesh,
                     const std::function<BoundaryLabel(const std::array<Eigen::Vector3d, 3>&)>& label);

/// Swaps two vertices of every negatively oriented tet.
void orient_positively(const std::vector<Eigen::Vector3d>& vertices, std::vector<Tet>& tets);

struct EdgePatch
{
  int edge = -1;
  std::vector<int> cells;
  double h = 0;     // diameter of the patch
  double kappa = 0; // min over patch cells of h_K / rho_K
  bool dirichlet_edge = false;
  std::vector<int> gamma_faces; // patch boundary faces on the Dirichlet part
};

EdgePatch edge_patch(const MeshTopology& mesh, int e);

struct CellGeometry
{
  double h = 0;
  double rho = 0; // twice the inradius
  double kappa = 0;
  double volume = 0;
};

CellGeometry geometry_stats(const MeshTopology& mesh, int K);

struct ConformityReport
{
  bool ok = true;
  std::string message;
  double volume = 0;
  double boundary_area = 0;
};

/// Face multiplicities, orientation, labels, and hanging vertices on edges.
ConformityReport check_conformity(const MeshTopology& mesh);

/// Kuhn subdivision of [0,1]^3 into 6 n^3 tets; all boundary faces Dirichlet.
MeshTopology unit_cube_mesh(int n);

/// Kuhn subdivision of a union of axis-aligned unit cells. `cells` lists integer lower
/// corners on a grid of spacing 1/n relative to `origin`.
MeshTopology kuhn_mesh(const std::vector<std::array<int, 3>>& cells, int n,
                       const Eigen::Vector3d& origin, double spacing);

/// Red refinement into 8 children; the inner octahedron is cut along its shortest diagonal.
MeshTopology refine_uniform(const MeshTopology& mesh);

/// Longest-edge bisection with recursive conforming closure. Every marked cell is bisected
/// at least once. `parent` (optional) receives the index of the originating cell.
MeshTopology refine_bisection(const MeshTopology& mesh, const std::vector<int>& marked,
                              int max_depth = 200, std::vector<int>* parent = nullptr);

/// MEDIT ASCII subset. `ref_labels` maps triangle references to labels; references that are
/// not listed raise UnmappedReference unless `default_label` is set.
MeshTopology read_medit(const std::string& path, const std::map<int, BoundaryLabel>& ref_labels,
                        const BoundaryLabel* default_label = nullptr);
MeshTopology read_medit(const std::string& path);
void write_medit(const MeshTopology& mesh, const std::string& path);

} // namespace curlcurl::mesh
