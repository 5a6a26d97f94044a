#include "nlbt/serialization.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "nlbt/errors.hpp"

namespace nlbt {

namespace {

double number(const Json& j, const std::string& what) {
  if (!j.is_number()) throw UsageError(what + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw UsageError(what + ": not finite");
  return v;
}

int integer(const Json& j, const std::string& what) {
  if (!j.is_number_integer()) throw UsageError(what + ": expected an integer");
  return j.get<int>();
}

const Json& require(const Json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw UsageError(what + ": missing key '" + key + "'");
  return j.at(key);
}

Json params_of(const Json& j, const std::string& what) {
  if (!j.is_object()) throw UsageError(what + ": expected an object with 'kind' and 'params'");
  if (!j.contains("kind") || !j.at("kind").is_string()) throw UsageError(what + ": missing string 'kind'");
  return j.contains("params") ? j.at("params") : Json::object();
}

std::string shape(Eigen::Index r, Eigen::Index c) { return std::to_string(r) + "x" + std::to_string(c); }

void check_square(const MatrixXd& a, int in, int out, const std::string& what) {
  if (a.rows() != out || a.cols() != in) {
    throw DimensionError(what + ": matrix is " + shape(a.rows(), a.cols()) + ", expected " + shape(out, in));
  }
}

int size_param(const Json& p, int fallback, const std::string& what) {
  return p.contains("n") ? integer(p.at("n"), what + ".n") : fallback;
}

// NaN and infinities are written as null.
Json real(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json pair_to_json(const std::pair<VectorXd, VectorXd>& p) {
  return Json{{"x", vector_to_json(p.first)}, {"y", vector_to_json(p.second)}};
}

}  // namespace

Json to_json(const MatrixXd& a) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < a.cols(); ++k) row.push_back(real(a(i, k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_to_json(const VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(real(v(i)));
  return out;
}

MatrixXd matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw UsageError(what + ": expected an array of rows");
  if (j.empty()) return MatrixXd(0, 0);
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j.front().is_array()) throw UsageError(what + ": expected an array of rows");
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  MatrixXd a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw DimensionError(what + ": row " + std::to_string(i) + " has a different length");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      a(i, k) = number(row.at(static_cast<std::size_t>(k)), what);
    }
  }
  return a;
}

MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (j.is_array() && j.empty() && (rows == 0 || cols == 0)) return MatrixXd(rows, cols);
  MatrixXd a = matrix_from_json(j, what);
  // [[], []] reads as 2x0.
  if (cols == 0 && a.rows() == rows) return MatrixXd(rows, 0);
  if (a.rows() != rows || a.cols() != cols) {
    throw DimensionError(what + ": matrix is " + shape(a.rows(), a.cols()) + ", expected " + shape(rows, cols));
  }
  return a;
}

VectorXd vector_from_json(const Json& j, const std::string& what) {
  if (j.is_number()) return VectorXd::Constant(1, number(j, what));
  if (!j.is_array()) throw UsageError(what + ": expected an array of numbers");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j.at(i), what);
  return v;
}

Json to_json(const CoefficientField& f) {
  Json p = Json::object();
  switch (f.kind()) {
    case FieldKind::Zero:
      p["in"] = f.input_dim();
      p["out"] = f.output_dim();
      break;
    case FieldKind::Linear:
    case FieldKind::CubicDrift: p["matrix"] = to_json(f.matrix()); break;
    case FieldKind::Sine:
    case FieldKind::Square:
    case FieldKind::Cube: p["n"] = f.input_dim(); break;
    case FieldKind::Sum: {
      Json terms = Json::array();
      for (const auto& t : f.terms()) terms.push_back(to_json(t));
      p["terms"] = std::move(terms);
      break;
    }
    case FieldKind::Projected:
      p["outer"] = to_json(f.outer());
      p["in_map"] = to_json(f.in_map());
      p["field"] = to_json(f.inner());
      break;
    case FieldKind::Extension:
      p["name"] = f.name();
      p["in"] = f.input_dim();
      p["out"] = f.output_dim();
      break;
  }
  return Json{{"kind", to_string(f.kind())}, {"params", std::move(p)}};
}

CoefficientField field_from_json(const Json& j, int in, int out, const std::string& what) {
  const Json p = params_of(j, what);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "zero") {
    const int i = p.contains("in") ? integer(p.at("in"), what + ".in") : in;
    const int o = p.contains("out") ? integer(p.at("out"), what + ".out") : out;
    if (i != in || o != out) {
      throw DimensionError(what + ": zero field is " + shape(o, i) + ", expected " + shape(out, in));
    }
    return CoefficientField::zero(in, out);
  }
  if (kind == "linear" || kind == "affine") {
    MatrixXd a = matrix_from_json(require(p, "matrix", what), what + ".matrix");
    check_square(a, in, out, what);
    return CoefficientField::linear(std::move(a));
  }
  if (kind == "cubic_drift") {
    MatrixXd a = matrix_from_json(require(p, "matrix", what), what + ".matrix");
    check_square(a, in, out, what);
    return CoefficientField::cubic_drift(std::move(a));
  }
  if (kind == "sine" || kind == "square" || kind == "cube") {
    const int n = size_param(p, in, what);
    if (n != in || n != out) {
      throw DimensionError(what + ": elementwise " + kind + " of size " + std::to_string(n) + " cannot map R^" +
                           std::to_string(in) + " to R^" + std::to_string(out));
    }
    if (kind == "sine") return CoefficientField::sine(n);
    if (kind == "square") return CoefficientField::square(n);
    return CoefficientField::cube(n);
  }
  if (kind == "sum") {
    const Json& terms = require(p, "terms", what);
    if (!terms.is_array() || terms.empty()) throw UsageError(what + ": sum needs a non-empty 'terms' array");
    std::vector<CoefficientField> fields;
    for (std::size_t k = 0; k < terms.size(); ++k) {
      fields.push_back(field_from_json(terms.at(k), in, out, what + ".terms[" + std::to_string(k) + "]"));
    }
    return CoefficientField::sum(std::move(fields));
  }
  if (kind == "projected") {
    MatrixXd outer = matrix_from_json(require(p, "outer", what), what + ".outer");
    MatrixXd in_map = matrix_from_json(require(p, "in_map", what), what + ".in_map");
    if (outer.rows() != out || in_map.cols() != in) {
      throw DimensionError(what + ": projection maps R^" + std::to_string(in_map.cols()) + " to R^" +
                           std::to_string(outer.rows()) + ", expected R^" + std::to_string(in) + " to R^" +
                           std::to_string(out));
    }
    CoefficientField inner = field_from_json(require(p, "field", what), static_cast<int>(in_map.rows()),
                                             static_cast<int>(outer.cols()), what + ".field");
    return CoefficientField::projected(std::move(outer), std::move(inner), std::move(in_map));
  }
  if (kind == "extension") {
    throw UsageError(what + ": extension fields cannot be loaded from a config; register them programmatically");
  }
  throw UsageError(what + ": unknown field kind '" + kind + "'");
}

std::vector<CoefficientField> columns_from_json(const Json& j, int n, int count, const std::string& what) {
  std::vector<CoefficientField> cols;
  if (j.is_object()) {
    const Json p = params_of(j, what);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "zero") {
      cols.assign(static_cast<std::size_t>(count), CoefficientField::zero(n, n));
      return cols;
    }
    if (kind != "linear_columns") {
      throw UsageError(what + ": expected a list of fields or a 'linear_columns' object, got '" + kind + "'");
    }
    const Json& mats = require(p, "matrices", what);
    if (!mats.is_array()) throw UsageError(what + ".matrices: expected an array");
    for (std::size_t k = 0; k < mats.size(); ++k) {
      const std::string name = what + "[" + std::to_string(k) + "]";
      cols.push_back(CoefficientField::linear(matrix_from_json(mats.at(k), n, n, name)));
    }
  } else if (j.is_array()) {
    for (std::size_t k = 0; k < j.size(); ++k) {
      cols.push_back(field_from_json(j.at(k), n, n, what + "[" + std::to_string(k) + "]"));
    }
  } else {
    throw UsageError(what + ": expected a list of fields or a 'linear_columns' object");
  }
  if (static_cast<int>(cols.size()) != count) {
    throw DimensionError(what + ": " + std::to_string(cols.size()) + " columns, expected " + std::to_string(count));
  }
  return cols;
}

Json to_json(const StochasticSystem& sys) {
  Json j = Json::object();
  j["dims"] = Json{{"n", sys.n()}, {"m", sys.m()}, {"p", sys.p()}, {"q", sys.q()}};
  j["f"] = to_json(sys.f());
  j["B"] = to_json(sys.B());
  Json G = Json::array();
  for (const auto& g : sys.G()) G.push_back(to_json(g));
  j["G"] = std::move(G);
  Json Gamma = Json::array();
  for (const auto& g : sys.Gamma()) Gamma.push_back(to_json(g));
  j["Gamma"] = std::move(Gamma);
  Json M = Json::array();
  for (const auto& mj : sys.M()) M.push_back(to_json(mj));
  j["M"] = std::move(M);
  j["h"] = to_json(sys.h());
  j["E"] = to_json(sys.E());
  j["K"] = to_json(sys.K());
  return j;
}

StochasticSystem system_from_json(const Json& j) {
  if (!j.is_object()) throw UsageError("system: expected an object");
  static const char* const known[] = {"dims", "f", "B", "G", "Gamma", "M", "h", "E", "K"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw UsageError("system: unknown key '" + item.key() + "'");
  }
  const Json& d = require(j, "dims", "system");
  const int n = integer(require(d, "n", "dims"), "dims.n");
  const int m = d.contains("m") ? integer(d.at("m"), "dims.m") : 0;
  const int p = integer(require(d, "p", "dims"), "dims.p");
  const int q = d.contains("q") ? integer(d.at("q"), "dims.q") : 0;
  if (n < 1 || m < 0 || p < 1 || q < 0) throw DimensionError("dims: need n >= 1, p >= 1, m >= 0, q >= 0");

  SystemCoefficients c;
  c.f = field_from_json(require(j, "f", "system"), n, n, "f");
  c.B = j.contains("B") ? matrix_from_json(j.at("B"), n, m, "B") : MatrixXd::Zero(n, m);
  if (j.contains("G")) {
    c.G = columns_from_json(j.at("G"), n, m, "G");
  } else {
    c.G.assign(static_cast<std::size_t>(m), CoefficientField::zero(n, n));
  }
  if (j.contains("Gamma")) {
    c.Gamma = columns_from_json(j.at("Gamma"), n, q, "Gamma");
  } else {
    c.Gamma.assign(static_cast<std::size_t>(q), CoefficientField::zero(n, n));
  }
  if (j.contains("M")) {
    const Json& M = j.at("M");
    if (!M.is_array() || static_cast<int>(M.size()) != q) {
      throw DimensionError("M: expected a list of " + std::to_string(q) + " matrices");
    }
    for (std::size_t k = 0; k < M.size(); ++k) {
      c.M.push_back(matrix_from_json(M.at(k), n, m, "M[" + std::to_string(k) + "]"));
    }
  } else {
    c.M.assign(static_cast<std::size_t>(q), MatrixXd::Zero(n, m));
  }
  c.h = field_from_json(require(j, "h", "system"), n, p, "h");
  c.E = j.contains("E") ? matrix_from_json(j.at("E"), p, m, "E") : MatrixXd::Zero(p, m);
  c.K = j.contains("K") ? matrix_from_json(j.at("K"), q, q, "K") : MatrixXd::Identity(q, q);
  return StochasticSystem(std::move(c));
}

Json to_json(const BalancedRealization& bal) {
  Json j = to_json(bal.balanced_system);
  j["S"] = to_json(bal.S);
  j["S_inv"] = to_json(bal.S_inv);
  j["Sigma"] = vector_to_json(bal.Sigma);
  j["hash"] = bal.hash;
  return j;
}

Json to_json(const ReducedSystem& red) {
  Json j = to_json(red.system);
  j["r"] = red.r;
  j["Sigma1"] = vector_to_json(red.Sigma1);
  j["Sigma2"] = vector_to_json(red.Sigma2);
  j["parent_hash"] = red.parent_hash;
  return j;
}

Json to_json(const ControlSignal& u) {
  Json p = Json::object();
  switch (u.kind()) {
    case ControlKind::Zero: p["channels"] = u.channels(); break;
    case ControlKind::PiecewiseConstant: p["values"] = to_json(u.values()); break;
    case ControlKind::Sinusoid:
      p["amplitudes"] = vector_to_json(u.amplitudes());
      p["frequencies"] = vector_to_json(u.rates());
      break;
    case ControlKind::ExponentialDecay:
      p["amplitudes"] = vector_to_json(u.amplitudes());
      p["rates"] = vector_to_json(u.rates());
      break;
  }
  return Json{{"kind", to_string(u.kind())}, {"params", std::move(p)}, {"horizon", u.horizon()}};
}

ControlSignal control_from_json(const Json& j, int m, double default_horizon) {
  const Json p = params_of(j, "control");
  const std::string kind = j.at("kind").get<std::string>();
  const double T = j.contains("horizon") ? number(j.at("horizon"), "control.horizon") : default_horizon;
  auto channels = [m](const VectorXd& v, const char* name) {
    if (v.size() != m) {
      throw DimensionError(std::string("control.") + name + ": " + std::to_string(v.size()) + " entries, expected " +
                           std::to_string(m));
    }
  };
  if (kind == "zero") return ControlSignal::zero(m, T);
  if (kind == "piecewise_constant") {
    MatrixXd values = matrix_from_json(require(p, "values", "control"), "control.values");
    if (values.rows() != m) throw DimensionError("control.values: expected " + std::to_string(m) + " rows");
    return ControlSignal::piecewise_constant(std::move(values), T);
  }
  if (kind == "sinusoid") {
    VectorXd a = vector_from_json(require(p, "amplitudes", "control"), "control.amplitudes");
    VectorXd w = vector_from_json(require(p, "frequencies", "control"), "control.frequencies");
    channels(a, "amplitudes");
    channels(w, "frequencies");
    return ControlSignal::sinusoid(std::move(a), std::move(w), T);
  }
  if (kind == "exponential_decay") {
    VectorXd a = vector_from_json(require(p, "amplitudes", "control"), "control.amplitudes");
    VectorXd r = vector_from_json(require(p, "rates", "control"), "control.rates");
    channels(a, "amplitudes");
    channels(r, "rates");
    return ControlSignal::exponential_decay(std::move(a), std::move(r), T);
  }
  throw UsageError("control: unknown kind '" + kind + "'");
}

Json to_json(const ValidationReport& v) {
  Json sym = Json::array();
  for (const auto& s : v.symmetry) {
    sym.push_back(Json{{"coefficient", s.coefficient},
                       {"status", to_string(s.status)},
                       {"method", s.sampled ? "sampled" : "exact"},
                       {"max_defect", real(s.max_defect)},
                       {"symmetric", s.symmetric}});
  }
  return Json{{"ok", v.ok()},
              {"k_min_eigenvalue", real(v.k_min_eigenvalue)},
              {"point_symmetric", v.point_symmetric()},
              {"symmetry_method", v.symmetry_method()},
              {"symmetry", std::move(sym)}};
}

Json to_json(const CertifyReport& r) {
  return Json{{"inequality", to_string(r.which)},
              {"method", r.method},
              {"n_samples", r.n_samples},
              {"max_residual", real(r.max_residual)},
              {"argmax_pair", pair_to_json(r.argmax_pair)},
              {"tolerance", r.tolerance},
              {"pass", r.pass}};
}

Json to_json(const LipschitzData& l) {
  return Json{{"lambda", real(l.lambda)},
              {"lambda_source", l.lambda_source},
              {"lambda_sampled", real(l.lambda_sampled)},
              {"argmin_pair", pair_to_json(l.argmin)},
              {"c_gamma", real(l.c_gamma)},
              {"c_gamma_source", l.c_gamma_source},
              {"c_h", real(l.c_h)},
              {"c_h_source", l.c_h_source},
              {"c_B", real(l.c_B)},
              {"c_M", real(l.c_M)},
              {"c_min", real(l.c_min)},
              {"mu_max", real(l.mu_max)},
              {"mode", to_string(l.mode)}};
}

Json to_json(const GramianPair& gp) {
  Json j = Json::object();
  j["provenance"] = gp.provenance;
  j["mode"] = to_string(gp.mode);
  j["P"] = to_json(gp.P);
  j["Q"] = to_json(gp.Q);
  j["certificate"] = Json{{"X", to_json(gp.cert.X)}, {"delta", gp.cert.delta}, {"calU", to_json(gp.cert.calU)}};
  j["epsilons"] = Json{{"eps_P", real(gp.eps_P)},
                       {"eps_Q", real(gp.eps_Q)},
                       {"halvings_P", gp.halvings_P},
                       {"halvings_Q", gp.halvings_Q},
                       {"scalings_P", gp.scalings_P}};
  j["lipschitz_data"] = gp.lip ? to_json(*gp.lip) : Json(nullptr);
  j["certify_reports"] = Json::array({to_json(gp.reach_report), to_json(gp.obs_report)});
  return j;
}

Json to_json(const Estimate& e) { return Json{{"value", real(e.value)}, {"stderr", real(e.se)}}; }

Json to_json(const BoundReport& b) {
  Json j = Json::object();
  j["r"] = b.r;
  j["hsv_tail"] = real(b.hsv_tail);
  j["control_energy"] = real(b.control_energy);
  j["tilde_energy"] = real(b.tilde_energy);
  j["delta"] = b.delta;
  j["applicable"] = b.applicable;
  j["bound_value"] = b.applicable ? real(b.bound_value) : Json("not applicable");
  j["mc_error"] = b.has_mc ? to_json(b.mc_error) : Json(nullptr);
  j["satisfied"] = b.applicable ? Json(b.satisfied) : Json(nullptr);
  j["note"] = b.note;
  return j;
}

Json to_json(const ReducedGramianCheck& c) {
  return Json{{"r", c.r}, {"reach", to_json(c.reach)}, {"obs", to_json(c.obs)}, {"pass", c.pass}};
}

Json to_json(const ReductionValidation& v) {
  Json j = Json::object();
  j["Sigma"] = vector_to_json(v.Sigma);
  j["balanced_hash"] = v.balanced_hash;
  j["bound_applicable"] = v.applicable;
  j["symmetry_note"] = v.symmetry_note;
  Json reports = Json::array();
  for (const auto& r : v.reports) reports.push_back(to_json(r));
  j["reports"] = std::move(reports);
  Json checks = Json::array();
  for (const auto& c : v.reduced_checks) checks.push_back(to_json(c));
  j["reduced_gramian_checks"] = std::move(checks);
  j["all_satisfied"] = v.all_satisfied;
  j["monotone"] = v.monotone;
  j["findings"] = v.findings;
  j["warnings"] = v.warnings;
  return j;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw UsageError("write to '" + path + "' failed");
}

}  // namespace nlbt
