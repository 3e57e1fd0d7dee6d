#include "qmcr/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace qmcr {

using nlohmann::json;

namespace {

[[noreturn]] void parse_fail(const std::string& file, const std::string& where,
                             const std::string& msg) {
  fail(Errc::ParseError, file + ": " + where + ": " + msg);
}

Complex parse_complex(const json& j, const std::string& file, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    parse_fail(file, where, "complex entries are [re, im] pairs");
  return Complex(j[0].get<double>(), j[1].get<double>());
}

CMat parse_matrix(const json& j, const std::string& file, const std::string& where) {
  if (!j.is_array() || j.empty()) parse_fail(file, where, "matrix must be a nonempty array of rows");
  const size_t rows = j.size();
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) parse_fail(file, where, "matrix rows must be arrays");
  CMat m(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) parse_fail(file, where, "ragged matrix");
    for (size_t c = 0; c < cols; ++c)
      m(r, c) = parse_complex(j[r][c], file, where + "[" + std::to_string(r) + "][" +
                                                std::to_string(c) + "]");
  }
  return m;
}

CVec parse_vector(const json& j, const std::string& file, const std::string& where) {
  if (!j.is_array() || j.empty()) parse_fail(file, where, "vector must be a nonempty array");
  CVec v(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    v(i) = parse_complex(j[i], file, where + "[" + std::to_string(i) + "]");
  return v;
}

// One Kraus entry: a plain matrix, or {matrix, prefactor?, sqrt_affine?} where
// sqrt_affine is {"const": c0, "<param>": c1, ...} scaling by sqrt(c0 + sum c_i p_i).
CMat parse_kraus(const json& j, const std::map<std::string, double>& params,
                 const std::string& file, const std::string& where) {
  if (j.is_array()) return parse_matrix(j, file, where);
  if (!j.is_object() || !j.contains("matrix"))
    parse_fail(file, where, "kraus entry must be a matrix or an object with a 'matrix' key");
  CMat m = parse_matrix(j.at("matrix"), file, where + ".matrix");
  double factor = 1.0;
  if (j.contains("prefactor")) {
    if (!j.at("prefactor").is_number()) parse_fail(file, where, "prefactor must be a number");
    factor *= j.at("prefactor").get<double>();
  }
  if (j.contains("sqrt_affine")) {
    const json& sa = j.at("sqrt_affine");
    if (!sa.is_object()) parse_fail(file, where, "sqrt_affine must be an object");
    double affine = 0.0;
    for (auto it = sa.begin(); it != sa.end(); ++it) {
      if (!it.value().is_number()) parse_fail(file, where, "sqrt_affine coefficients are numbers");
      double coef = it.value().get<double>();
      if (it.key() == "const") {
        affine += coef;
      } else {
        auto p = params.find(it.key());
        if (p == params.end())
          parse_fail(file, where, "unknown parameter '" + it.key() + "' in sqrt_affine");
        affine += coef * p->second;
      }
    }
    if (affine < -1e-12)
      parse_fail(file, where, "sqrt_affine evaluates to a negative scale at these parameters");
    factor *= std::sqrt(std::max(affine, 0.0));
  }
  return factor * m;
}

std::vector<CMat> parse_kraus_list(const json& j, const std::map<std::string, double>& params,
                                   const std::string& file, const std::string& where) {
  if (!j.is_array() || j.empty()) parse_fail(file, where, "expected a nonempty list of Kraus entries");
  std::vector<CMat> out;
  // a bare matrix (rows of pair-arrays) is also accepted as a single-Kraus list
  bool looks_like_matrix = j[0].is_array() && !j[0].empty() && j[0][0].is_array() &&
                           !j[0][0].empty() && j[0][0][0].is_number();
  if (looks_like_matrix) {
    out.push_back(parse_matrix(j, file, where));
    return out;
  }
  for (size_t i = 0; i < j.size(); ++i)
    out.push_back(parse_kraus(j[i], params, file, where + "[" + std::to_string(i) + "]"));
  return out;
}

std::pair<std::string, std::string> split_block_key(const std::string& key,
                                                    const std::string& file) {
  auto pos = key.find("<-");
  if (pos == std::string::npos)
    parse_fail(file, "blocks." + key, "block keys use the form \"to<-from\"");
  return {key.substr(0, pos), key.substr(pos + 2)};
}

int parse_site_index(const std::string& s, const std::string& file, const std::string& where) {
  try {
    size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument("trail");
    return v;
  } catch (...) {
    parse_fail(file, where, "site label '" + s + "' is not an integer");
  }
}

std::optional<KrausMap> parse_repeat_entry(const json& rep, const char* key, Index dim,
                                           const std::map<std::string, double>& params,
                                           const std::string& file, const std::string& where) {
  if (!rep.contains(key)) return std::nullopt;
  return KrausMap(dim, parse_kraus_list(rep.at(key), params, file, where + "." + key));
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

LoadedModel parse_model_json(const std::string& text, const std::string& filename,
                             const std::map<std::string, double>& overrides, bool strict) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    parse_fail(filename, "(root)", e.what());
  }
  LoadedModel m;
  m.digest = fnv1a_hex(text);
  if (!j.is_object()) parse_fail(filename, "(root)", "model file must be a JSON object");
  if (j.value("schema", 0) != 1) parse_fail(filename, "schema", "expected schema 1");
  m.name = j.value("name", filename);

  if (!j.contains("internal_dim") || !j.at("internal_dim").is_number_integer())
    parse_fail(filename, "internal_dim", "required integer");
  m.dim = j.at("internal_dim").get<int>();
  if (m.dim < 1) parse_fail(filename, "internal_dim", "must be positive");

  std::string topo = j.value("topology", "finite");
  if (topo == "finite")
    m.topology = Topology::Finite;
  else if (topo == "halfline")
    m.topology = Topology::HalfLine;
  else if (topo == "line")
    m.topology = Topology::Line;
  else
    parse_fail(filename, "topology", "one of finite|halfline|line");

  if (j.contains("parameters")) {
    for (auto it = j.at("parameters").begin(); it != j.at("parameters").end(); ++it) {
      if (!it.value().is_number()) parse_fail(filename, "parameters." + it.key(), "must be numeric");
      m.parameters[it.key()] = it.value().get<double>();
    }
  }
  for (const auto& [k, v] : overrides) {
    if (!m.parameters.count(k))
      parse_fail(filename, "parameters", "override of undeclared parameter '" + k + "'");
    m.parameters[k] = v;
  }

  const json empty_obj = json::object();
  const json& blocks = j.contains("blocks") ? j.at("blocks") : empty_obj;

  if (m.topology == Topology::Finite) {
    if (!j.contains("vertices") || !j.at("vertices").is_array())
      parse_fail(filename, "vertices", "finite models list their vertices");
    Tom t;
    t.dim = m.dim;
    for (const auto& v : j.at("vertices")) t.vertices.push_back(v.get<std::string>());
    for (auto it = blocks.begin(); it != blocks.end(); ++it) {
      auto [to, from] = split_block_key(it.key(), filename);
      int i = t.index_of(to), jj = t.index_of(from);
      t.set_block(i, jj,
                  KrausMap(m.dim, parse_kraus_list(it.value(), m.parameters, filename,
                                                   "blocks." + it.key())));
    }
    TomValidation val = validate(t);
    if (strict && !val.ok())
      parse_fail(filename, "blocks",
                 "column trace-preservation residual " + std::to_string(val.worst_tp_residual()));
    m.tom = std::move(t);
  } else if (m.topology == Topology::HalfLine) {
    HalfLineModel h;
    h.dim = m.dim;
    int max_idx = 0;
    for (auto it = blocks.begin(); it != blocks.end(); ++it) {
      auto [to, from] = split_block_key(it.key(), filename);
      int i = parse_site_index(to, filename, "blocks." + it.key());
      int jj = parse_site_index(from, filename, "blocks." + it.key());
      if (i < 0 || jj < 0) parse_fail(filename, "blocks." + it.key(), "half-line sites are >= 0");
      h.boundary[{i, jj}] = KrausMap(
          m.dim, parse_kraus_list(it.value(), m.parameters, filename, "blocks." + it.key()));
      max_idx = std::max({max_idx, i, jj});
    }
    if (!j.contains("repeat")) parse_fail(filename, "repeat", "half-line models need a tail");
    const json& rep = j.at("repeat");
    h.tail_sub = parse_repeat_entry(rep, "sub", m.dim, m.parameters, filename, "repeat");
    h.tail_super = parse_repeat_entry(rep, "super", m.dim, m.parameters, filename, "repeat");
    h.tail_diag = parse_repeat_entry(rep, "diag", m.dim, m.parameters, filename, "repeat");
    h.tail_start = j.value("tail_start", std::max(1, max_idx));
    m.halfline = std::move(h);
  } else {
    LineModel l;
    l.dim = m.dim;
    int extent = 1;
    for (auto it = blocks.begin(); it != blocks.end(); ++it) {
      auto [to, from] = split_block_key(it.key(), filename);
      int i = parse_site_index(to, filename, "blocks." + it.key());
      int jj = parse_site_index(from, filename, "blocks." + it.key());
      l.center[{i, jj}] = KrausMap(
          m.dim, parse_kraus_list(it.value(), m.parameters, filename, "blocks." + it.key()));
      extent = std::max({extent, std::abs(i), std::abs(jj)});
    }
    if (!j.contains("repeat_left") || !j.contains("repeat_right"))
      parse_fail(filename, "repeat_left/repeat_right", "line models need both tails");
    const json& rl = j.at("repeat_left");
    const json& rr = j.at("repeat_right");
    l.left_sub = parse_repeat_entry(rl, "sub", m.dim, m.parameters, filename, "repeat_left");
    l.left_super = parse_repeat_entry(rl, "super", m.dim, m.parameters, filename, "repeat_left");
    l.left_diag = parse_repeat_entry(rl, "diag", m.dim, m.parameters, filename, "repeat_left");
    l.right_sub = parse_repeat_entry(rr, "sub", m.dim, m.parameters, filename, "repeat_right");
    l.right_super = parse_repeat_entry(rr, "super", m.dim, m.parameters, filename, "repeat_right");
    l.right_diag = parse_repeat_entry(rr, "diag", m.dim, m.parameters, filename, "repeat_right");
    l.right_tail_start = j.value("right_tail_start", extent);
    l.left_tail_end = j.value("left_tail_end", -extent);
    m.line = std::move(l);
  }

  const int nsites = m.tom ? m.tom->size() : 0;
  auto site_index = [&](const json& node, const std::string& where) -> int {
    std::string label = node.get<std::string>();
    if (m.topology == Topology::Finite) return m.tom->index_of(label);
    return parse_site_index(label, filename, where);
  };

  if (j.contains("states")) {
    for (auto it = j.at("states").begin(); it != j.at("states").end(); ++it) {
      const json& s = it.value();
      const std::string where = "states." + it.key();
      if (!s.is_object() || !s.contains("type")) parse_fail(filename, where, "missing type");
      std::string type = s.at("type").get<std::string>();
      BoundState b;
      if (type == "mixed_site") {
        int site = site_index(s.at("site"), where);
        CMat rho = identity(m.dim) / static_cast<double>(m.dim);
        if (m.topology == Topology::Finite)
          b.stacked = site_density(nsites, site, rho);
        else {
          b.site_local = rho;
          b.site = site;
        }
      } else if (type == "site" || type == "site_pure") {
        int site = site_index(s.at("site"), where);
        CMat rho;
        if (type == "site") {
          rho = parse_matrix(s.at("matrix"), filename, where + ".matrix");
        } else {
          CVec v = parse_vector(s.at("vector"), filename, where + ".vector");
          v /= v.norm();
          rho = v * v.adjoint();
        }
        if (rho.rows() != m.dim) parse_fail(filename, where, "state dimension mismatch");
        if (m.topology == Topology::Finite)
          b.stacked = site_density(nsites, site, rho);
        else {
          b.site_local = rho;
          b.site = site;
        }
      } else if (type == "full" || type == "full_pure") {
        if (m.topology != Topology::Finite)
          parse_fail(filename, where, "full states need a finite model");
        if (type == "full") {
          b.full = parse_matrix(s.at("matrix"), filename, where + ".matrix");
        } else {
          CVec v = parse_vector(s.at("vector"), filename, where + ".vector");
          v /= v.norm();
          b.full = v * v.adjoint();
        }
        if (b.full->rows() != m.dim * nsites) parse_fail(filename, where, "state dimension mismatch");
      } else {
        parse_fail(filename, where, "unknown state type '" + type + "'");
      }
      m.states[it.key()] = std::move(b);
    }
  }

  if (j.contains("subspaces")) {
    for (auto it = j.at("subspaces").begin(); it != j.at("subspaces").end(); ++it) {
      const json& s = it.value();
      const std::string where = "subspaces." + it.key();
      if (!s.is_object() || !s.contains("type")) parse_fail(filename, where, "missing type");
      std::string type = s.at("type").get<std::string>();
      BoundSubspace b;
      if (type == "sites") {
        if (m.topology != Topology::Finite)
          parse_fail(filename, where, "subspaces are declared on finite models");
        for (const auto& v : s.at("sites")) b.sites.push_back(site_index(v, where));
        b.spec = sites_subspace(nsites, m.dim, b.sites);
      } else if (type == "admissible") {
        std::vector<CMat> proj(nsites, zeros(m.dim, m.dim));
        for (auto pv = s.at("site_vectors").begin(); pv != s.at("site_vectors").end(); ++pv) {
          int site = m.tom->index_of(pv.key());
          CMat span(m.dim, pv.value().size());
          Index col = 0;
          for (const auto& vecj : pv.value()) {
            CVec v = parse_vector(vecj, filename, where + "." + pv.key());
            span.col(col++) = v;
          }
          CMat basis = orthonormal_span(span);
          proj[site] = basis * basis.adjoint();
          b.sites.push_back(site);
        }
        b.spec = admissible_subspace(std::move(proj));
      } else if (type == "general") {
        CMat span(m.dim * nsites, s.at("vectors").size());
        Index col = 0;
        for (const auto& vecj : s.at("vectors"))
          span.col(col++) = parse_vector(vecj, filename, where + ".vectors");
        b.spec = general_subspace(span);
      } else {
        parse_fail(filename, where, "unknown subspace type '" + type + "'");
      }
      m.subspaces[it.key()] = std::move(b);
    }
  }

  return m;
}

LoadedModel load_model_file(const std::string& path,
                            const std::map<std::string, double>& overrides, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::ParseError, path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model_json(ss.str(), path, overrides, strict);
}

}  // namespace qmcr
