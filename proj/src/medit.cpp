#include "curlcurl/error.hpp"
#include "curlcurl/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace curlcurl::mesh {

namespace {

/// Whitespace tokenizer that remembers line numbers and drops '#' comments.
class Tokens
{
public:
  explicit Tokens(std::istream& in)
  {
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (auto c = line.find('#'); c != std::string::npos)
        line.erase(c);
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok)
        toks_.emplace_back(tok, no);
    }
  }

  bool done() const { return pos_ >= toks_.size(); }
  int line() const { return done() ? (toks_.empty() ? 0 : toks_.back().second) : toks_[pos_].second; }

  std::string word()
  {
    if (done())
      throw ParseError("unexpected end of file", line());
    return toks_[pos_++].first;
  }

  long integer()
  {
    const int ln = line();
    const std::string s = word();
    try {
      std::size_t used = 0;
      const long v = std::stol(s, &used);
      if (used != s.size())
        throw ParseError("expected integer, got '" + s + "'", ln);
      return v;
    }
    catch (const std::logic_error&) {
      throw ParseError("expected integer, got '" + s + "'", ln);
    }
  }

  double real()
  {
    const int ln = line();
    const std::string s = word();
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size())
        throw ParseError("expected number, got '" + s + "'", ln);
      return v;
    }
    catch (const std::logic_error&) {
      throw ParseError("expected number, got '" + s + "'", ln);
    }
  }

private:
  std::vector<std::pair<std::string, int>> toks_;
  std::size_t pos_ = 0;
};

// sections that are read and discarded: tokens per entry
const std::map<std::string, int> skipped_sections{
  {"Edges", 3},        {"Corners", 1},           {"RequiredVertices", 1},
  {"Ridges", 1},       {"RequiredEdges", 1},     {"RequiredTriangles", 1},
  {"Normals", 3},      {"NormalAtVertices", 2},  {"Tangents", 3},
  {"TangentAtEdges", 3}, {"Quadrilaterals", 5},  {"Hexahedra", 9},
  {"Prisms", 7}};

} // namespace

MeshTopology read_medit(const std::string& path, const std::map<int, BoundaryLabel>& ref_labels,
                        const BoundaryLabel* default_label)
{
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open " + path, 0);
  Tokens tk(in);

  std::vector<Eigen::Vector3d> x;
  std::vector<Tet> tets;
  std::vector<std::pair<Face, int>> tris;
  std::vector<int> tri_lines;
  bool have_vertices = false, have_tets = false, ended = false;

  while (!tk.done() && !ended) {
    const int ln = tk.line();
    const std::string kw = tk.word();
    if (kw == "MeshVersionFormatted") {
      tk.integer();
    }
    else if (kw == "Dimension") {
      const long d = tk.integer();
      if (d != 3)
        throw ParseError("only Dimension 3 is supported", ln);
    }
    else if (kw == "Vertices") {
      const long n = tk.integer();
      if (n < 0)
        throw ParseError("negative count", ln);
      x.resize(n);
      for (long i = 0; i < n; ++i) {
        x[i][0] = tk.real();
        x[i][1] = tk.real();
        x[i][2] = tk.real();
        tk.integer();
      }
      have_vertices = true;
    }
    else if (kw == "Tetrahedra") {
      const long n = tk.integer();
      if (n < 0)
        throw ParseError("negative count", ln);
      for (long i = 0; i < n; ++i) {
        const int l = tk.line();
        Tet t;
        for (auto& v : t) {
          v = int(tk.integer()) - 1;
          if (v < 0 || v >= int(x.size()))
            throw ParseError("vertex index out of range", l);
        }
        tk.integer();
        tets.push_back(t);
      }
      have_tets = true;
    }
    else if (kw == "Triangles") {
      const long n = tk.integer();
      if (n < 0)
        throw ParseError("negative count", ln);
      for (long i = 0; i < n; ++i) {
        const int l = tk.line();
        Face f;
        for (auto& v : f) {
          v = int(tk.integer()) - 1;
          if (v < 0 || v >= int(x.size()))
            throw ParseError("vertex index out of range", l);
        }
        std::sort(f.begin(), f.end());
        tris.emplace_back(f, int(tk.integer()));
        tri_lines.push_back(l);
      }
    }
    else if (kw == "End") {
      ended = true;
    }
    else if (auto it = skipped_sections.find(kw); it != skipped_sections.end()) {
      const long n = tk.integer();
      for (long i = 0; i < n * it->second; ++i)
        tk.word();
    }
    else {
      throw ParseError("unknown keyword '" + kw + "'", ln);
    }
  }
  if (!have_vertices)
    throw ParseError("missing Vertices section", tk.line());
  if (!have_tets)
    throw ParseError("missing Tetrahedra section", tk.line());

  orient_positively(x, tets);

  // only triangles on the topological boundary carry labels
  std::map<Face, int> count;
  for (const auto& t : tets)
    for (int i = 0; i < 4; ++i) {
      Face f{t[(i + 1) % 4], t[(i + 2) % 4], t[(i + 3) % 4]};
      std::sort(f.begin(), f.end());
      ++count[f];
    }
  BoundaryLabels labels;
  for (std::size_t i = 0; i < tris.size(); ++i) {
    const auto& [f, ref] = tris[i];
    auto c = count.find(f);
    if (c == count.end() || c->second != 1)
      continue;
    auto it = ref_labels.find(ref);
    if (it != ref_labels.end())
      labels[f] = it->second;
    else if (default_label)
      labels[f] = *default_label;
    else
      throw UnmappedReference("triangle reference " + std::to_string(ref) + " at line " +
                              std::to_string(tri_lines[i]));
  }
  return build_topology(std::move(x), std::move(tets), labels);
}

MeshTopology read_medit(const std::string& path)
{
  const BoundaryLabel d = BoundaryLabel::Dirichlet;
  return read_medit(path, {}, &d);
}

void write_medit(const MeshTopology& mesh, const std::string& path)
{
  std::ofstream out(path);
  if (!out)
    throw Error("cannot write " + path);
  out << "MeshVersionFormatted 2\n\nDimension 3\n\nVertices\n" << mesh.n_vertices() << "\n";
  out << std::setprecision(17);
  for (const auto& x : mesh.vertices)
    out << x[0] << " " << x[1] << " " << x[2] << " 0\n";
  out << "\nTetrahedra\n" << mesh.n_tets() << "\n";
  for (const auto& t : mesh.tets)
    out << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << " " << t[3] + 1 << " 0\n";
  out << "\nTriangles\n" << mesh.boundary_faces.size() << "\n";
  for (const auto& [f, l] : mesh.boundary_faces) {
    const auto& v = mesh.faces[f];
    out << v[0] + 1 << " " << v[1] + 1 << " " << v[2] + 1 << " "
        << (l == BoundaryLabel::Dirichlet ? 1 : 2) << "\n";
  }
  out << "\nEnd\n";
}

} // namespace curlcurl::mesh
