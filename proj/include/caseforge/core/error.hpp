#pragma once

#include <stdexcept>
#include <string>

namespace caseforge {

// Machine-parsable error codes. The CLI prints them as `error[<name>]: <msg>`.
enum class Errc {
  invalid_argument,
  config_invalid,
  unsatisfiable_config,
  shape_mismatch,
  label_out_of_range,
  missing_file,
  checksum_mismatch,
  split_leakage,
  bad_manifest,
  io_error,
  bad_checkpoint,
  non_finite_loss,
  empty_split,
  empty_gallery,
  single_identity,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::config_invalid: return "config_invalid";
    case Errc::unsatisfiable_config: return "unsatisfiable_config";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::label_out_of_range: return "label_out_of_range";
    case Errc::missing_file: return "missing_file";
    case Errc::checksum_mismatch: return "checksum_mismatch";
    case Errc::split_leakage: return "split_leakage";
    case Errc::bad_manifest: return "bad_manifest";
    case Errc::io_error: return "io_error";
    case Errc::bad_checkpoint: return "bad_checkpoint";
    case Errc::non_finite_loss: return "non_finite_loss";
    case Errc::empty_split: return "empty_split";
    case Errc::empty_gallery: return "empty_gallery";
    case Errc::single_identity: return "single_identity";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  Errc code() const { return code_; }
  std::string tagged() const {
    return std::string("error[") + errc_name(code_) + "]: " + what();
  }

 private:
  Errc code_;
};

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) throw Error(code, msg);
}

}  // namespace caseforge
