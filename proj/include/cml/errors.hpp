#pragma once

#include <stdexcept>
#include <string>

namespace cml {

// Base of every error raised by the library. Each subclass corresponds to one
// failure category so callers (and tests) can discriminate without parsing text.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CML_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

CML_DEFINE_ERROR(DimensionError);
CML_DEFINE_ERROR(NumericError);
CML_DEFINE_ERROR(IndexError);
CML_DEFINE_ERROR(SpecError);
CML_DEFINE_ERROR(MaskError);
CML_DEFINE_ERROR(StateError);
CML_DEFINE_ERROR(DomainError);
CML_DEFINE_ERROR(ConfigError);
CML_DEFINE_ERROR(EmptyInputError);
CML_DEFINE_ERROR(CapabilityError);
CML_DEFINE_ERROR(ParseError);
CML_DEFINE_ERROR(SplitError);
CML_DEFINE_ERROR(IoError);

#undef CML_DEFINE_ERROR

// Training produced a non-finite loss. Carries the position for diagnostics.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what)
      : Error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace cml
