#pragma once

#include <stdexcept>
#include <string>

namespace unirobust {

// Every failure raised by the core carries one of these codes; the C API maps
// them one-to-one onto ur_status values.
enum class ErrorCode {
  dimension,         // shape mismatch
  domain,            // value outside an op's domain (log of non-positive, ...)
  contract,          // violated precondition (non-scalar loss, non-unitary input, ...)
  vocabulary,        // token id outside the vocabulary
  length,            // sequence longer than max_seq_len
  label,             // target/label outside [0, n_c)
  config,            // invalid configuration value
  io,                // file could not be read or written, malformed record
  empty,             // empty corpus, empty batch, empty statistics
  stage_dependency,  // downstream stage is missing an upstream artifact
  training,          // non-finite gradients or parameters
  conditioning,      // singular or indefinite matrix
  position,          // invalid word/character position for a perturbation
  usage,             // unknown command or malformed command line
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace unirobust
