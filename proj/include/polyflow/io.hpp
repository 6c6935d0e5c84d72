// Reading and writing models, transform chains, flow checkpoints, samples and
// reports. JSON through nlohmann::json; binary weight blobs are base64 of
// little-endian float64.

#ifndef POLYFLOW_IO_HPP
#define POLYFLOW_IO_HPP

#include "polyflow/cnf.hpp"
#include "polyflow/diagnostics.hpp"
#include "polyflow/harness.hpp"
#include "polyflow/transform_chain.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <boost/endian/conversion.hpp>
#include "json.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace polyflow {

using json = nlohmann::json;

class IOError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Files and base64

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write " + path.string());
  out << content;
}

inline json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IOError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

inline std::string base64_encode(const std::string& bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::string::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

inline std::string base64_decode(std::string text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::size_t pad = 0;
  while (!text.empty() && text.back() == '=') {
    text.pop_back();
    ++pad;
  }
  if (pad > 2) throw IOError("base64: malformed padding");
  try {
    std::string out(It(text.begin()), It(text.end()));
    // A partial final group decodes to extra zero bits.
    const std::size_t expect = text.size() * 6 / 8;
    out.resize(expect);
    return out;
  } catch (const std::exception&) {
    throw IOError("base64: invalid character");
  }
}

inline json encode_matrix(const Matrix& M) {
  std::string bytes(static_cast<std::size_t>(M.size()) * 8, '\0');
  for (Index i = 0; i < M.size(); ++i) {
    std::uint64_t bits;
    const double x = M.data()[i];
    std::memcpy(&bits, &x, 8);
    boost::endian::native_to_little_inplace(bits);
    std::memcpy(bytes.data() + 8 * i, &bits, 8);
  }
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"order", "column-major"}, {"float64_le", base64_encode(bytes)}};
}

inline Matrix decode_matrix(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const std::string bytes = base64_decode(j.at("float64_le").get<std::string>());
  if (static_cast<Index>(bytes.size()) != rows * cols * 8) throw IOError("matrix blob has the wrong length");
  Matrix M(rows, cols);
  for (Index i = 0; i < M.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes.data() + 8 * i, 8);
    boost::endian::little_to_native_inplace(bits);
    std::memcpy(M.data() + i, &bits, 8);
  }
  return M;
}

inline json to_json_rows(const Matrix& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) rows.push_back(std::vector<double>(M.row(i).begin(), M.row(i).end()));
  return rows;
}

inline json to_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

inline Matrix matrix_from_rows(const json& j) {
  const Index r = static_cast<Index>(j.size());
  const Index c = r > 0 ? static_cast<Index>(j.at(0).size()) : 0;
  Matrix M(r, c);
  for (Index i = 0; i < r; ++i) {
    if (static_cast<Index>(j.at(i).size()) != c) throw IOError("ragged matrix in JSON");
    for (Index k = 0; k < c; ++k) M(i, k) = j.at(i).at(k).get<double>();
  }
  return M;
}

inline Vector vector_from_json(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

// ---------------------------------------------------------------------------
// Models and chains

/// {"variable_names": [...], "S": [[...]], "h": [...], "bounds": [[lo, hi], ...],
///  "A_c": [[...]], "b_c": [...]}  (A_c/b_c optional)
inline CanonicalModel model_from_json(const json& j) {
  CanonicalModel m;
  m.variable_names = j.at("variable_names").get<std::vector<std::string>>();
  m.S = matrix_from_rows(j.at("S"));
  const Index R = static_cast<Index>(m.variable_names.size());
  if (m.S.rows() == 0) m.S.resize(0, R);
  m.h = j.contains("h") ? vector_from_json(j.at("h")) : Vector::Zero(m.S.rows());
  if (j.contains("A_c")) {
    m.A_c = matrix_from_rows(j.at("A_c"));
    m.b_c = vector_from_json(j.at("b_c"));
  } else {
    m.A_c.resize(0, R);
    m.b_c.resize(0);
  }
  if (j.contains("bounds")) {
    std::vector<std::pair<double, double>> bounds;
    for (const auto& b : j.at("bounds")) bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    m.add_bounds(bounds);
  }
  m.validate();
  return m;
}

/// Bounds are written as part of A_c / b_c.
inline json to_json(const CanonicalModel& m) {
  return {{"variable_names", m.variable_names},
          {"S", to_json_rows(m.S)},
          {"h", to_json(m.h)},
          {"A_c", to_json_rows(m.A_c)},
          {"b_c", to_json(m.b_c)}};
}

inline json to_json(const TransformChain& c) {
  return {{"original_names", c.original_names},
          {"rounded_names", c.rounded_names()},
          {"dim", c.dim()},
          {"inscribed_radius", c.inscribed_radius()},
          {"embedding",
           {{"kind", to_string(c.embedding.kind)},
            {"free_names", c.embedding.free_names},
            {"T", to_json_rows(c.embedding.T)},
            {"tau", to_json(c.embedding.tau)}}},
          {"rounding", {{"E", to_json_rows(c.rounding.E)}, {"eps", to_json(c.rounding.eps)}}},
          {"john_polytope", {{"A", to_json_rows(c.john.A())}, {"b", to_json(c.john.b())}}}};
}

inline TransformChain chain_from_json(const json& j) {
  TransformChain c;
  c.original_names = j.at("original_names").get<std::vector<std::string>>();
  const json& e = j.at("embedding");
  c.embedding.kind = e.at("kind").get<std::string>() == "svd" ? EmbeddingKind::SVD : EmbeddingKind::RREF;
  c.embedding.free_names = e.at("free_names").get<std::vector<std::string>>();
  c.embedding.T = matrix_from_rows(e.at("T"));
  c.embedding.tau = vector_from_json(e.at("tau"));
  c.rounding.E = matrix_from_rows(j.at("rounding").at("E"));
  c.rounding.eps = vector_from_json(j.at("rounding").at("eps"));
  c.john = HPolytope(matrix_from_rows(j.at("john_polytope").at("A")), vector_from_json(j.at("john_polytope").at("b")));
  return c;
}

/// {"weights": [...], "means": [[...]], "covariances": [[[...]]]} or
/// "isotropic_variance": s instead of explicit covariances.
inline MixtureOfGaussians mixture_from_json(const json& j, Index K) {
  const Vector w = vector_from_json(j.at("weights"));
  std::vector<Vector> means;
  for (const auto& m : j.at("means")) means.push_back(vector_from_json(m));
  for (const Vector& m : means)
    if (m.size() != K) throw IOError("mixture mean has dimension " + std::to_string(m.size()) + ", expected " + std::to_string(K));
  std::vector<Matrix> covs;
  if (j.contains("covariances")) {
    for (const auto& c : j.at("covariances")) covs.push_back(matrix_from_rows(c));
  } else {
    const double s = j.at("isotropic_variance").get<double>();
    covs.assign(means.size(), s * Matrix::Identity(K, K));
  }
  return {w, means, covs};
}

inline json to_json(const MixtureOfGaussians& m) {
  json means = json::array(), covs = json::array();
  for (const Vector& mu : m.means()) means.push_back(to_json(mu));
  for (const Matrix& S : m.covariances()) covs.push_back(to_json_rows(S));
  return {{"weights", to_json(m.weights())}, {"means", means}, {"covariances", covs}};
}

// ---------------------------------------------------------------------------
// Flow checkpoints

inline json to_json(const TrainedFlow& f) {
  json layers = json::array();
  for (std::size_t l = 0; l < f.net.num_layers(); ++l)
    layers.push_back({{"W", encode_matrix(f.net.weights()[l])}, {"b", encode_matrix(f.net.biases()[l])}});
  json j = {{"format", "polyflow-flow-checkpoint"},
            {"version", 1},
            {"manifold", to_string(f.kind)},
            {"sizes", f.net.sizes()},
            {"activation", "silu"},
            {"layers", layers},
            {"step_size", f.step_size},
            {"divergence_probes", f.divergence.probes},
            {"project_euclidean", f.project_euclidean},
            {"log_volume", f.log_volume},
            {"ball_exponent", f.ball.exponent},
            {"polytope", {{"A", encode_matrix(f.polytope.A())}, {"b", encode_matrix(f.polytope.b())}}},
            {"loss_history", f.loss_history}};
  if (f.aitchison) {
    const AitchisonMap& a = *f.aitchison;
    j["aitchison"] = {{"vertices", encode_matrix(a.polytope.V())},
                      {"P", encode_matrix(a.projection.P)},
                      {"zbar", encode_matrix(a.projection.zbar)},
                      {"mu", encode_matrix(a.projection.mu)},
                      {"sigma", encode_matrix(a.projection.sigma)},
                      {"singular_values", encode_matrix(a.projection.singular_values)}};
  }
  return j;
}

inline TrainedFlow flow_from_json(const json& j) {
  if (j.value("format", "") != "polyflow-flow-checkpoint") throw IOError("not a flow checkpoint");
  TrainedFlow f;
  f.kind = parse_flow_kind(j.at("manifold").get<std::string>());
  const auto sizes = j.at("sizes").get<std::vector<Index>>();
  f.net = MLP(sizes, RandomStream(0));
  const json& layers = j.at("layers");
  if (layers.size() != f.net.num_layers()) throw IOError("checkpoint layer count does not match its sizes");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix W = decode_matrix(layers[l].at("W"));
    Matrix b = decode_matrix(layers[l].at("b"));
    if (W.rows() != f.net.weights()[l].rows() || W.cols() != f.net.weights()[l].cols() ||
        b.size() != f.net.biases()[l].size())
      throw IOError("checkpoint layer " + std::to_string(l) + " has the wrong shape");
    f.net.weights()[l] = W;
    f.net.biases()[l] = Vector(b.reshaped());
  }
  f.step_size = j.at("step_size").get<double>();
  f.divergence.probes = j.value("divergence_probes", 0);
  f.project_euclidean = j.value("project_euclidean", false);
  f.log_volume = j.value("log_volume", 0.0);
  f.ball.exponent = j.value("ball_exponent", 0.0);
  f.polytope = HPolytope(decode_matrix(j.at("polytope").at("A")), Vector(decode_matrix(j.at("polytope").at("b")).reshaped()));
  f.loss_history = j.value("loss_history", std::vector<double>{});
  if (j.contains("aitchison")) {
    const json& a = j.at("aitchison");
    AitchisonMap map;
    map.polytope = VPolytope(decode_matrix(a.at("vertices")));
    map.H = helmert_basis(map.polytope.num_vertices());
    map.projection.P = decode_matrix(a.at("P"));
    map.projection.zbar = decode_matrix(a.at("zbar")).reshaped();
    map.projection.mu = decode_matrix(a.at("mu")).reshaped();
    map.projection.sigma = decode_matrix(a.at("sigma")).reshaped();
    map.projection.singular_values = decode_matrix(a.at("singular_values")).reshaped();
    f.aitchison = std::move(map);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Tables and reports

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Header of the samples table: a source label followed by one column per dimension.
inline std::string samples_csv_header(const std::vector<std::string>& names) {
  std::string out = "source";
  for (const auto& n : names) out += "," + n;
  return out + "\n";
}

/// One row per sample (columns of X).
inline std::string samples_csv_rows(const Matrix& X, const std::string& source) {
  std::string out;
  for (Index j = 0; j < X.cols(); ++j) {
    out += source;
    for (Index k = 0; k < X.rows(); ++k) out += "," + format_double(X(k, j));
    out += "\n";
  }
  return out;
}

inline std::string samples_csv(const Matrix& X, const std::vector<std::string>& names, const std::string& source) {
  require(static_cast<Index>(names.size()) == X.rows(), "samples_csv: one name per dimension required");
  return samples_csv_header(names) + samples_csv_rows(X, source);
}

/// Rows whose source matches (all rows if source is empty).
inline Matrix read_samples_csv(const std::filesystem::path& path, const std::string& source = "",
                               std::vector<std::string>* names = nullptr) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IOError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header.front() != "source") throw IOError(path.string() + ": first column must be 'source'");
  header.erase(header.begin());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    if (!source.empty() && cell != source) continue;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IOError(path.string() + ": not a number: " + cell);
      }
    }
    if (row.size() != header.size()) throw IOError(path.string() + ": row width differs from header");
    rows.push_back(std::move(row));
  }
  Matrix X(static_cast<Index>(header.size()), static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t k = 0; k < header.size(); ++k) X(static_cast<Index>(k), static_cast<Index>(j)) = rows[j][k];
  if (names) *names = header;
  return X;
}

/// Long format: source, x_name, y_name, x, y, density.
inline constexpr const char* kDensityGridHeader = "source,x_name,y_name,x,y,density\n";

inline std::string density_grid_rows(const std::vector<DensityGrid>& grids, const std::vector<std::string>& names,
                                     const std::string& source) {
  std::string out;
  for (const DensityGrid& g : grids) {
    for (Index a = 0; a < g.xs.size(); ++a)
      for (Index b = 0; b < g.ys.size(); ++b)
        out += source + "," + names[static_cast<std::size_t>(g.dim_x)] + "," + names[static_cast<std::size_t>(g.dim_y)] +
               "," + format_double(g.xs(a)) + "," + format_double(g.ys(b)) + "," + format_double(g.density(a, b)) + "\n";
  }
  return out;
}

inline json to_json(const ChainDiagnostics& d, const std::vector<std::string>& names) {
  json j = json::object();
  for (std::size_t k = 0; k < d.rhat.size(); ++k) j[names[k]] = {{"rhat", d.rhat[k]}, {"ess_pct", d.ess_pct[k]}};
  return j;
}

inline json to_json(const MetricsReport& r) {
  return {{"kl_nats", r.kl_nats},         {"ess_pct", r.ess_pct},     {"outside_pct", r.outside_pct},
          {"z_estimate", r.z_estimate},   {"n_samples", r.n_samples}, {"n_inside", r.n_inside},
          {"seed", r.seed}};
}

}  // namespace polyflow

#endif  // POLYFLOW_IO_HPP
