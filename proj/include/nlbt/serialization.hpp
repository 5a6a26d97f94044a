#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "nlbt/analysis.hpp"
#include "nlbt/balancing.hpp"
#include "nlbt/coefficient_field.hpp"
#include "nlbt/control_signal.hpp"
#include "nlbt/gramians.hpp"
#include "nlbt/lyapunov.hpp"
#include "nlbt/simulation.hpp"
#include "nlbt/system.hpp"

namespace nlbt {

using Json = nlohmann::ordered_json;

// Matrices are arrays of rows. Empty matrices serialize as [] and take their
// shape from the expected dimensions when read back.
Json to_json(const MatrixXd& a);
Json vector_to_json(const VectorXd& v);
MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what);
/// Shape taken from the data; all rows must have equal length.
MatrixXd matrix_from_json(const Json& j, const std::string& what);
VectorXd vector_from_json(const Json& j, const std::string& what);

/// {"kind": ..., "params": {...}}
Json to_json(const CoefficientField& f);
/// A field R^in -> R^out; missing sizes are filled in from (in, out).
CoefficientField field_from_json(const Json& j, int in, int out, const std::string& what);
/// G or Gamma: a list of `count` fields or {"kind": "linear_columns",
/// "params": {"matrices": [...]}}.
std::vector<CoefficientField> columns_from_json(const Json& j, int n, int count, const std::string& what);

/// {"dims", "f", "B", "G", "Gamma", "M", "h", "E", "K"}
Json to_json(const StochasticSystem& sys);
StochasticSystem system_from_json(const Json& j);

/// System schema plus {"S", "S_inv", "Sigma"}.
Json to_json(const BalancedRealization& bal);
Json to_json(const ReducedSystem& red);

Json to_json(const ControlSignal& u);
/// Kinds: zero, piecewise_constant {values}, sinusoid {amplitudes,
/// frequencies}, exponential_decay {amplitudes, rates}. `horizon` defaults
/// to the grid horizon.
ControlSignal control_from_json(const Json& j, int m, double default_horizon);

Json to_json(const ValidationReport& v);
Json to_json(const CertifyReport& r);
Json to_json(const LipschitzData& l);
Json to_json(const GramianPair& gp);
Json to_json(const BoundReport& b);
Json to_json(const ReducedGramianCheck& c);
Json to_json(const ReductionValidation& v);
Json to_json(const Estimate& e);

Json read_json_file(const std::string& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::string& path, const Json& j);

}  // namespace nlbt
