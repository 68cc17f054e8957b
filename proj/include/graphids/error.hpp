#pragma once

#include <stdexcept>
#include <string>

namespace graphids {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or malformed CSV columns.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, int step)
      : Error(what), epoch_(epoch), step_(step) {}
  int epoch() const { return epoch_; }
  int step() const { return step_; }

 private:
  int epoch_;
  int step_;
};

}  // namespace graphids
