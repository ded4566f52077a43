#pragma once

#include <stdexcept>
#include <string>

namespace epipomdp {

// Base class for every failure raised by the library. Callers that only care
// about "something went wrong in the model" can catch this; the harness maps
// subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class DegenerateRate : public Error {
 public:
  using Error::Error;
};

class ImpossibleTransition : public Error {
 public:
  using Error::Error;
};

class AllHypothesesRejected : public Error {
 public:
  using Error::Error;
};

class NodeBudgetExceeded : public Error {
 public:
  using Error::Error;
};

class MissingHypothesisData : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace epipomdp
