#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hlmi {

/// Invalid argument to a sampler or model operation (bad variance, shape, simplex, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A factorization or normalization failed on values that passed validation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normal equations or an information matrix are singular.
class RankDeficientError : public NumericalError {
 public:
  RankDeficientError(const std::string& what, std::vector<std::string> columns)
      : NumericalError(what), columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

/// Malformed or inconsistent user input (files, configs, datasets).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hlmi
