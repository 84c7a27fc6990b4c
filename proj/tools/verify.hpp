#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace rieszlab::verify {

struct Check {
  std::string name;
  double measured = 0;
  std::string target;
  bool pass = false;
  std::string known;  // non-empty: documented reason the target is out of reach at desk scale
};

struct CriterionResult {
  int id = 0;
  std::string name;
  std::vector<Check> checks;
  double seconds = 0;
  nlohmann::json data;

  bool pass() const;
  // failed, and every failing check is a documented one
  bool known_failure() const;
};

struct VerifyOptions {
  std::vector<int> only;       // empty = all
  double fault_laplacian = 0;  // relative perturbation of the Laplacian in the identity check
};

struct CriterionInfo {
  int id;
  std::string name;
  std::string group;
};

const std::vector<CriterionInfo>& criteria();
// Criterion ids of a group name ("bessel", "heat", "parametrix", ...) or a number.
std::vector<int> select(const std::string& spec);

CriterionResult run_criterion(int id, const VerifyOptions& opt = {});
std::vector<CriterionResult> verify_all(const VerifyOptions& opt = {});

std::string format_line(const CriterionResult& r);
nlohmann::json to_json(const CriterionResult& r);

}  // namespace rieszlab::verify
