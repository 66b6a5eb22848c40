#pragma once

#include "curlcurl/mesh.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace curlcurl::cases {

using Vec3 = Eigen::Vector3d;
using VectorField = std::function<Vec3(const Vec3&)>;

/// Data of one experiment. J is divergence free and orthogonal to gradients vanishing on
/// the Dirichlet boundary.
struct CaseDefinition
{
  std::string name;
  /// Initial mesh at resolution n (n >= 1), boundary labels included.
  std::function<mesh::MeshTopology(int n)> mesh_builder;
  VectorField J;
  std::optional<VectorField> A;
  std::optional<VectorField> curl_A;
  /// Labels applied to meshes that come from files (--mesh-in).
  std::function<mesh::BoundaryLabel(const std::array<Vec3, 3>&)> boundary;
  bool convex = false;
};

/// Unit cube, A = (cos sin sin, -sin cos sin, 0)(pi x) and J = curl curl A = 3 pi^2 A.
CaseDefinition smooth_cube_case();

/// L x (0,1) where L is the unit square with the sector 2pi - phi < theta < 2pi removed.
/// A = (0, 0, chi(r) r^alpha sin(alpha theta)) with alpha = pi / (2pi - phi).
/// Throws BadAngle unless 0 < phi < 2pi.
CaseDefinition ltype_case(double phi);

/// (-1,1)^3 minus (0,1)^3, J = (1,1,0); no closed-form solution.
CaseDefinition fichera_case();

/// Unit cube with A = (x2 (1 - x2), 0, 0) and J = (2, 0, 0). Faces x1 = 0,1 and x2 = 0,1 are
/// Dirichlet, faces x3 = 0,1 Neumann. A lies in Nedelec(p) for p >= 2, satisfies both
/// boundary conditions and div A = 0, so Galerkin reproduces it. Throws TraceCheckFailure if
/// the tangential trace check on the Dirichlet faces or the Neumann check fails.
CaseDefinition polynomial_case();

/// cube, ltype-3pi4, ltype-pi2, ltype-pi8, fichera, poly. Throws InvalidConfig otherwise.
CaseDefinition case_by_name(const std::string& name);
std::vector<std::string> case_names();

/// Smooth radial cutoff: 1 for r <= 1/4, 0 for r >= 3/4, quintic C2 bridge in between.
/// Returns chi, chi', chi''.
std::array<double, 3> cutoff(double r);

/// Extruded structured mesh of L x (0,1): every fan triangle of the polygon is split into
/// n^2 similar triangles, n layers in x3, prisms cut into 3 tets. All faces Dirichlet.
mesh::MeshTopology ltype_mesh(double phi, int n);

/// Polygon of L in counterclockwise order starting at (1,0); the origin is not included.
std::vector<Eigen::Vector2d> ltype_polygon(double phi);

} // namespace curlcurl::cases
