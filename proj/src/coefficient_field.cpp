#include "nlbt/coefficient_field.hpp"

#include <cmath>

#include "nlbt/errors.hpp"

namespace nlbt {

struct CoefficientField::Node {
  FieldKind kind = FieldKind::Zero;
  int in = 0;
  int out = 0;
  MatrixXd a;      // Linear, CubicDrift, Projected outer
  MatrixXd r;      // Projected in_map
  std::vector<CoefficientField> children;  // Sum terms, Projected inner (one)
  Callable fn;
  std::string name;
  Symmetry declared = Symmetry::Unknown;
  std::size_t scratch = 0;  // doubles needed below this node
};

namespace {

using Node = CoefficientField::Node;

const MatrixXd kEmptyMatrix;
const std::vector<CoefficientField> kNoTerms;
const std::string kNoName;

std::size_t scratch_of(const CoefficientField& f);

// Evaluation on raw contiguous buffers; `scratch` holds at least
// node.scratch doubles and is never aliased with x or out.
void eval_node(const Node& node, const double* x, double* out, double* scratch);

thread_local std::vector<double> tl_scratch;
thread_local int tl_depth = 0;

}  // namespace

const char* to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::Zero: return "zero";
    case FieldKind::Linear: return "linear";
    case FieldKind::CubicDrift: return "cubic_drift";
    case FieldKind::Sine: return "sine";
    case FieldKind::Square: return "square";
    case FieldKind::Cube: return "cube";
    case FieldKind::Sum: return "sum";
    case FieldKind::Projected: return "projected";
    case FieldKind::Extension: return "extension";
  }
  return "?";
}

const char* to_string(Symmetry s) {
  switch (s) {
    case Symmetry::Exact: return "exact";
    case Symmetry::Violated: return "violated";
    case Symmetry::Unknown: return "unknown";
  }
  return "?";
}

CoefficientField::CoefficientField() : CoefficientField(zero(0, 0)) {}

CoefficientField CoefficientField::zero(int in, int out) {
  if (in < 0 || out < 0) throw DimensionError("zero field: negative dimension");
  auto n = std::make_shared<Node>();
  n->kind = FieldKind::Zero;
  n->in = in;
  n->out = out;
  return CoefficientField(std::move(n));
}

CoefficientField CoefficientField::linear(MatrixXd a) {
  auto n = std::make_shared<Node>();
  n->kind = FieldKind::Linear;
  n->in = static_cast<int>(a.cols());
  n->out = static_cast<int>(a.rows());
  n->a = std::move(a);
  return CoefficientField(std::move(n));
}

CoefficientField CoefficientField::cubic_drift(MatrixXd a) {
  if (a.rows() != a.cols()) throw DimensionError("cubic_drift field: matrix must be square");
  auto n = std::make_shared<Node>();
  n->kind = FieldKind::CubicDrift;
  n->in = n->out = static_cast<int>(a.rows());
  n->a = std::move(a);
  return CoefficientField(std::move(n));
}

namespace {
CoefficientField::Node elementwise(FieldKind kind, int dim) {
  if (dim < 0) throw DimensionError("elementwise field: negative dimension");
  Node n;
  n.kind = kind;
  n.in = n.out = dim;
  return n;
}
}  // namespace

CoefficientField CoefficientField::sine(int n) {
  return CoefficientField(std::make_shared<Node>(elementwise(FieldKind::Sine, n)));
}

CoefficientField CoefficientField::square(int n) {
  return CoefficientField(std::make_shared<Node>(elementwise(FieldKind::Square, n)));
}

CoefficientField CoefficientField::cube(int n) {
  return CoefficientField(std::make_shared<Node>(elementwise(FieldKind::Cube, n)));
}

CoefficientField CoefficientField::sum(std::vector<CoefficientField> terms) {
  if (terms.empty()) throw DimensionError("sum field: no terms");
  const int in = terms.front().input_dim();
  const int out = terms.front().output_dim();
  std::size_t child_scratch = 0;
  for (const auto& t : terms) {
    if (t.input_dim() != in || t.output_dim() != out) {
      throw DimensionError("sum field: member dimensions differ");
    }
    child_scratch = std::max(child_scratch, scratch_of(t));
  }
  if (terms.size() == 1) return terms.front();
  auto n = std::make_shared<Node>();
  n->kind = FieldKind::Sum;
  n->in = in;
  n->out = out;
  n->scratch = static_cast<std::size_t>(out) + child_scratch;
  n->children = std::move(terms);
  return CoefficientField(std::move(n));
}

CoefficientField CoefficientField::projected(MatrixXd outer, CoefficientField inner, MatrixXd in_map) {
  if (outer.cols() != inner.output_dim() || in_map.rows() != inner.input_dim()) {
    throw DimensionError("projected field: outer/in_map do not match the inner field");
  }
  auto n = std::make_shared<Node>();
  n->kind = FieldKind::Projected;
  n->in = static_cast<int>(in_map.cols());
  n->out = static_cast<int>(outer.rows());
  n->scratch = static_cast<std::size_t>(inner.input_dim() + inner.output_dim()) + scratch_of(inner);
  n->a = std::move(outer);
  n->r = std::move(in_map);
  n->children.push_back(std::move(inner));
  return CoefficientField(std::move(n));
}

CoefficientField CoefficientField::extension(int in, int out, Callable fn, std::string name,
                                             Symmetry symmetric) {
  if (!fn) throw UsageError("extension field '" + name + "': empty callable");
  auto n = std::make_shared<Node>();
  n->kind = FieldKind::Extension;
  n->in = in;
  n->out = out;
  n->fn = std::move(fn);
  n->name = std::move(name);
  n->declared = symmetric;
  return CoefficientField(std::move(n));
}

int CoefficientField::input_dim() const { return node_->in; }
int CoefficientField::output_dim() const { return node_->out; }
FieldKind CoefficientField::kind() const { return node_->kind; }

namespace {

void eval_node(const Node& node, const double* xp, double* outp, double* scratch) {
  using Eigen::Map;
  Map<const VectorXd> x(xp, node.in);
  Map<VectorXd> out(outp, node.out);
  switch (node.kind) {
    case FieldKind::Zero:
      out.setZero();
      return;
    case FieldKind::Linear:
      out.noalias() = node.a * x;
      return;
    case FieldKind::CubicDrift:
      out.noalias() = node.a * x;
      out.array() -= x.array().cube();
      return;
    case FieldKind::Sine:
      out = x.array().sin().matrix();
      return;
    case FieldKind::Square:
      out = x.array().square().matrix();
      return;
    case FieldKind::Cube:
      out = x.array().cube().matrix();
      return;
    case FieldKind::Sum: {
      double* tmp = scratch;
      double* below = scratch + node.out;
      bool first = true;
      for (const auto& child : node.children) {
        const Node& c = child.node();
        if (first) {
          eval_node(c, xp, outp, below);
          first = false;
        } else {
          eval_node(c, xp, tmp, below);
          out += Map<VectorXd>(tmp, node.out);
        }
      }
      return;
    }
    case FieldKind::Projected: {
      const Node& c = node.children.front().node();
      double* in_buf = scratch;
      double* out_buf = scratch + c.in;
      Map<VectorXd>(in_buf, c.in).noalias() = node.r * x;
      eval_node(c, in_buf, out_buf, out_buf + c.out);
      out.noalias() = node.a * Map<const VectorXd>(out_buf, c.out);
      return;
    }
    case FieldKind::Extension: {
      VectorXd xv = x;
      VectorXd r = node.fn(xv);
      if (r.size() != node.out) {
        throw DimensionError("extension field '" + node.name + "' returned a vector of size " +
                             std::to_string(r.size()) + ", expected " + std::to_string(node.out));
      }
      out = r;
      return;
    }
  }
}

}  // namespace

void CoefficientField::evaluate(const Eigen::Ref<const VectorXd>& x, Eigen::Ref<VectorXd> out) const {
  if (x.size() != node_->in || out.size() != node_->out) {
    throw DimensionError(std::string("field '") + to_string(node_->kind) + "': expected input " +
                         std::to_string(node_->in) + ", output " + std::to_string(node_->out) +
                         ", got " + std::to_string(x.size()) + " and " + std::to_string(out.size()));
  }
  const std::size_t need = node_->scratch;
  if (need == 0) {
    eval_node(*node_, x.data(), out.data(), nullptr);
    return;
  }
  if (tl_depth > 0) {
    // Re-entered from an extension callable: the shared buffer is in use.
    std::vector<double> local(need);
    eval_node(*node_, x.data(), out.data(), local.data());
    return;
  }
  if (tl_scratch.size() < need) tl_scratch.resize(need);
  struct DepthGuard {
    DepthGuard() { ++tl_depth; }
    ~DepthGuard() { --tl_depth; }
  } guard;
  eval_node(*node_, x.data(), out.data(), tl_scratch.data());
}

VectorXd CoefficientField::operator()(const VectorXd& x) const {
  VectorXd out(node_->out);
  evaluate(x, out);
  return out;
}

Symmetry CoefficientField::point_symmetry() const {
  switch (node_->kind) {
    case FieldKind::Zero:
    case FieldKind::Linear:
    case FieldKind::CubicDrift:
    case FieldKind::Sine:
    case FieldKind::Cube:
      return Symmetry::Exact;
    case FieldKind::Square:
      return is_identically_zero() ? Symmetry::Exact : Symmetry::Violated;
    case FieldKind::Sum: {
      Symmetry acc = Symmetry::Exact;
      for (const auto& t : node_->children) {
        const Symmetry s = t.point_symmetry();
        if (s == Symmetry::Violated) return Symmetry::Violated;
        if (s == Symmetry::Unknown) acc = Symmetry::Unknown;
      }
      return acc;
    }
    case FieldKind::Projected:
      if (is_identically_zero()) return Symmetry::Exact;
      return node_->children.front().point_symmetry();
    case FieldKind::Extension:
      return node_->declared;
  }
  return Symmetry::Unknown;
}

bool CoefficientField::is_identically_zero() const {
  switch (node_->kind) {
    case FieldKind::Zero:
      return true;
    case FieldKind::Linear:
      return node_->a.size() == 0 || node_->a.cwiseAbs().maxCoeff() == 0.0;
    case FieldKind::Sum:
      for (const auto& t : node_->children) {
        if (!t.is_identically_zero()) return false;
      }
      return true;
    case FieldKind::Projected:
      return node_->a.size() == 0 || node_->a.cwiseAbs().maxCoeff() == 0.0 ||
             node_->r.size() == 0 || node_->r.cwiseAbs().maxCoeff() == 0.0 ||
             node_->children.front().is_identically_zero();
    default:
      return node_->out == 0 || node_->in == 0;
  }
}

std::optional<MatrixXd> CoefficientField::linear_matrix() const {
  switch (node_->kind) {
    case FieldKind::Zero:
      return MatrixXd::Zero(node_->out, node_->in);
    case FieldKind::Linear:
      return node_->a;
    case FieldKind::Sum: {
      MatrixXd acc = MatrixXd::Zero(node_->out, node_->in);
      for (const auto& t : node_->children) {
        auto m = t.linear_matrix();
        if (!m) return std::nullopt;
        acc += *m;
      }
      return acc;
    }
    case FieldKind::Projected: {
      if (is_identically_zero()) return MatrixXd::Zero(node_->out, node_->in);
      auto m = node_->children.front().linear_matrix();
      if (!m) return std::nullopt;
      return MatrixXd(node_->a * (*m) * node_->r);
    }
    default:
      if (is_identically_zero()) return MatrixXd::Zero(node_->out, node_->in);
      return std::nullopt;
  }
}

std::optional<double> CoefficientField::euclidean_lipschitz() const {
  switch (node_->kind) {
    case FieldKind::Zero:
      return 0.0;
    case FieldKind::Linear:
      return spectral_norm(node_->a);
    case FieldKind::Sine:
      return node_->in == 0 ? 0.0 : 1.0;
    case FieldKind::Sum: {
      if (auto m = linear_matrix()) return spectral_norm(*m);
      double acc = 0.0;
      for (const auto& t : node_->children) {
        auto c = t.euclidean_lipschitz();
        if (!c) return std::nullopt;
        acc += *c;
      }
      return acc;
    }
    case FieldKind::Projected: {
      if (auto m = linear_matrix()) return spectral_norm(*m);
      auto c = node_->children.front().euclidean_lipschitz();
      if (!c) return std::nullopt;
      return spectral_norm(node_->a) * (*c) * spectral_norm(node_->r);
    }
    default:
      if (is_identically_zero()) return 0.0;
      return std::nullopt;
  }
}

CoefficientField CoefficientField::conjugate(const MatrixXd& outer, const MatrixXd& in_map) const {
  if (outer.cols() != node_->out || in_map.rows() != node_->in) {
    throw DimensionError("conjugate: matrices do not match the field dimensions");
  }
  switch (node_->kind) {
    case FieldKind::Zero:
      return zero(static_cast<int>(in_map.cols()), static_cast<int>(outer.rows()));
    case FieldKind::Linear:
      return linear(outer * node_->a * in_map);
    case FieldKind::CubicDrift:
      return sum({linear(outer * node_->a * in_map),
                  projected(-outer, cube(node_->in), in_map)});
    case FieldKind::Sum: {
      std::vector<CoefficientField> terms;
      for (const auto& t : node_->children) {
        CoefficientField c = t.conjugate(outer, in_map);
        if (c.kind() == FieldKind::Sum) {
          for (const auto& sub : c.terms()) terms.push_back(sub);
        } else {
          terms.push_back(std::move(c));
        }
      }
      // Fold all linear members into one.
      std::vector<CoefficientField> folded;
      std::optional<MatrixXd> lin;
      for (auto& t : terms) {
        if (t.kind() == FieldKind::Linear || t.kind() == FieldKind::Zero) {
          MatrixXd m = *t.linear_matrix();
          lin = lin ? MatrixXd(*lin + m) : m;
        } else {
          folded.push_back(std::move(t));
        }
      }
      if (lin) folded.insert(folded.begin(), linear(*lin));
      return sum(std::move(folded));
    }
    case FieldKind::Projected:
      return projected(outer * node_->a, node_->children.front(), node_->r * in_map);
    default:
      return projected(outer, *this, in_map);
  }
}

const MatrixXd& CoefficientField::matrix() const {
  return (node_->kind == FieldKind::Linear || node_->kind == FieldKind::CubicDrift) ? node_->a
                                                                                     : kEmptyMatrix;
}
const MatrixXd& CoefficientField::outer() const {
  return node_->kind == FieldKind::Projected ? node_->a : kEmptyMatrix;
}
const MatrixXd& CoefficientField::in_map() const {
  return node_->kind == FieldKind::Projected ? node_->r : kEmptyMatrix;
}
const CoefficientField& CoefficientField::inner() const {
  if (node_->kind != FieldKind::Projected) throw UsageError("inner(): not a projected field");
  return node_->children.front();
}
const std::vector<CoefficientField>& CoefficientField::terms() const {
  return node_->kind == FieldKind::Sum ? node_->children : kNoTerms;
}
const std::string& CoefficientField::name() const {
  return node_->kind == FieldKind::Extension ? node_->name : kNoName;
}

namespace {
std::size_t scratch_of(const CoefficientField& f) { return f.node().scratch; }
}  // namespace

}  // namespace nlbt
