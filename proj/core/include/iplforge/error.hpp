#pragma once

#include <stdexcept>
#include <string>

namespace iplforge {

// Base class for every error this library raises on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid family / arch / curriculum configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Dataset, manifest or feature-file I/O problems.
struct DataError : Error {
  using Error::Error;
};

// Sub-sampling or certainty selection failures.
struct SelectionError : Error {
  using Error::Error;
};

// BPE training or token decoding failures.
struct TokenizerError : Error {
  using Error::Error;
};

// WER / WERR preconditions violated.
struct MetricError : Error {
  using Error::Error;
};

// Model construction, forward-pass or checkpoint failures.
struct ModelError : Error {
  using Error::Error;
};

// Non-finite losses and other training aborts.
struct TrainingError : Error {
  using Error::Error;
};

// Batch decoding failures (unreadable features, vocab/model mismatch).
struct DecodeError : Error {
  using Error::Error;
};

// Dangling stage references, cycles, bad stage data selectors.
struct CurriculumError : Error {
  using Error::Error;
};

}  // namespace iplforge
