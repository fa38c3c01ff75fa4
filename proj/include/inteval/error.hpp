#pragma once

#include <stdexcept>
#include <string>

namespace inteval {

// Base of every error raised by the library. Subclasses map onto the error
// categories named in each module's contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (bad index, wrong shape, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class LabelingError : public Error {
 public:
  using Error::Error;
};

class CorpusError : public Error {
 public:
  using Error::Error;
};

class HarnessError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

#define INTEVAL_EXPECT(cond, msg)                         \
  do {                                                    \
    if (!(cond)) throw ::inteval::ContractViolation(msg); \
  } while (0)

}  // namespace inteval
