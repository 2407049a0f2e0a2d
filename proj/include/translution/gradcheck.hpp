#pragma once

#include <string>
#include <vector>

namespace translution {

/// Finite-difference verification recipes for every operator at small fixed
/// dims; returns the max relative error of reverse-mode against central
/// differences. Throws on unknown names.
double gradcheck_operator(const std::string& name);

std::vector<std::string> gradcheck_operator_names();

}  // namespace translution
