#ifndef MODELAB_ERRORS_HPP
#define MODELAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace modelab {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define MODELAB_DEFINE_ERROR(Name)                                  \
  struct Name : Error {                                             \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

// tensor core
MODELAB_DEFINE_ERROR(ShapeMismatch);
MODELAB_DEFINE_ERROR(DomainError);
MODELAB_DEFINE_ERROR(NonScalarLoss);
MODELAB_DEFINE_ERROR(NoActiveTape);

// losses
MODELAB_DEFINE_ERROR(DegenerateBatch);
MODELAB_DEFINE_ERROR(EmptyNegatives);
MODELAB_DEFINE_ERROR(NonFiniteInput);

// models
MODELAB_DEFINE_ERROR(InvalidLabel);
MODELAB_DEFINE_ERROR(NearZeroEmbedding);
MODELAB_DEFINE_ERROR(CheckpointFormatError);
MODELAB_DEFINE_ERROR(MissingCheckpoint);

// data
MODELAB_DEFINE_ERROR(InvalidSpec);
MODELAB_DEFINE_ERROR(InsufficientData);
MODELAB_DEFINE_ERROR(BadMagic);
MODELAB_DEFINE_ERROR(TruncatedFile);
MODELAB_DEFINE_ERROR(CountMismatch);

// training
MODELAB_DEFINE_ERROR(ConfigError);
MODELAB_DEFINE_ERROR(DivergenceDetected);

// metrics
MODELAB_DEFINE_ERROR(ZeroExpectedMass);
MODELAB_DEFINE_ERROR(EmptyCategory);
MODELAB_DEFINE_ERROR(EmptyInput);
MODELAB_DEFINE_ERROR(ZeroEmbedding);
MODELAB_DEFINE_ERROR(SingularCovariance);
MODELAB_DEFINE_ERROR(TooFewSamples);

// cli
MODELAB_DEFINE_ERROR(ConfigParseError);
MODELAB_DEFINE_ERROR(IoError);

#undef MODELAB_DEFINE_ERROR

}  // namespace modelab

#endif
