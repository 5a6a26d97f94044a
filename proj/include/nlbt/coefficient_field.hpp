#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nlbt/linalg.hpp"

namespace nlbt {

enum class FieldKind {
  Zero,        // F(x) = 0
  Linear,      // F(x) = A x
  CubicDrift,  // F(x) = A x - x∘3
  Sine,        // F(x) = sin(x), elementwise
  Square,      // F(x) = x∘2
  Cube,        // F(x) = x∘3
  Sum,         // F(x) = Σ F_k(x)
  Projected,   // F(x) = L · G(R x)
  Extension,   // user-supplied callable
};

const char* to_string(FieldKind kind);

/// Point symmetry F(-x) = -F(x): decided exactly for catalog kinds, unknown
/// (to be sampled) for extension fields.
enum class Symmetry { Exact, Violated, Unknown };

const char* to_string(Symmetry s);

/// A vector field R^in -> R^out from a closed catalog, with an extension hook
/// for programmatic users. Immutable; copies share the underlying node.
/// Evaluation is re-entrant and, for catalog kinds, allocation free.
class CoefficientField {
 public:
  using Callable = std::function<VectorXd(const VectorXd&)>;

  /// Default-constructed field is the zero map R^0 -> R^0.
  CoefficientField();

  static CoefficientField zero(int in, int out);
  static CoefficientField linear(MatrixXd a);
  static CoefficientField cubic_drift(MatrixXd a);
  static CoefficientField sine(int n);
  static CoefficientField square(int n);
  static CoefficientField cube(int n);
  static CoefficientField sum(std::vector<CoefficientField> terms);
  /// x -> outer * inner(in_map * x)
  static CoefficientField projected(MatrixXd outer, CoefficientField inner, MatrixXd in_map);
  /// Arbitrary callable. `symmetric` may declare point symmetry; by default it
  /// is Unknown and will be checked by sampling.
  static CoefficientField extension(int in, int out, Callable fn, std::string name,
                                    Symmetry symmetric = Symmetry::Unknown);

  int input_dim() const;
  int output_dim() const;
  FieldKind kind() const;

  VectorXd operator()(const VectorXd& x) const;
  void evaluate(const Eigen::Ref<const VectorXd>& x, Eigen::Ref<VectorXd> out) const;

  Symmetry point_symmetry() const;
  /// Structurally identically zero (zero kind, zero matrix, zero projection).
  bool is_identically_zero() const;
  /// The matrix when the field is exactly linear (x -> A x), otherwise empty.
  std::optional<MatrixXd> linear_matrix() const;
  /// A global Euclidean Lipschitz constant when one is known in closed form.
  std::optional<double> euclidean_lipschitz() const;

  /// x -> outer * F(in_map * x), with linear parts folded into matrices.
  CoefficientField conjugate(const MatrixXd& outer, const MatrixXd& in_map) const;

  // Structure accessors used by serialization.
  const MatrixXd& matrix() const;       // Linear, CubicDrift
  const MatrixXd& outer() const;        // Projected
  const MatrixXd& in_map() const;       // Projected
  const CoefficientField& inner() const;  // Projected
  const std::vector<CoefficientField>& terms() const;  // Sum
  const std::string& name() const;      // Extension

  struct Node;
  /// Internal: the shared evaluation node.
  const Node& node() const { return *node_; }

 private:
  explicit CoefficientField(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

}  // namespace nlbt
