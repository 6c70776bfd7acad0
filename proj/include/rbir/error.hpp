#pragma once

#include <stdexcept>
#include <string>

namespace rbir {

/// Error classes surfaced by the library. Each maps to a distinct CLI exit code.
enum class Errc {
  io = 2,
  malformed_file,
  unsupported_format,
  invalid_parameter,
  invalid_input,
  empty_region,
  shape_mismatch,
  duplicate_oid,
  corrupt_header,
  truncated,
  version_mismatch,
  palette_mismatch,
  missing_label,
  no_usable_images,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::io: return "io";
    case Errc::malformed_file: return "malformed-file";
    case Errc::unsupported_format: return "unsupported-format";
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::invalid_input: return "invalid-input";
    case Errc::empty_region: return "empty-region";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::duplicate_oid: return "duplicate-oid";
    case Errc::corrupt_header: return "corrupt-header";
    case Errc::truncated: return "truncated";
    case Errc::version_mismatch: return "version-mismatch";
    case Errc::palette_mismatch: return "palette-mismatch";
    case Errc::missing_label: return "missing-label";
    case Errc::no_usable_images: return "no-usable-images";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }
  int exit_code() const noexcept { return static_cast<int>(code_); }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace rbir
