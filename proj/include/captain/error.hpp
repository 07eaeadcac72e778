#ifndef CAPTAIN_ERROR_HPP
#define CAPTAIN_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace captain {

enum class Errc {
  MalformedHeader,
  DimensionMismatch,
  UnknownVersion,
  IoError,
  EmptyStructure,
  SpecMismatch,
  EmptyList,
  EmptyTarget,
  NonFinitePose,
  NonMonotoneTimestamps,
  MalformedTrajectory,
  UnorderedLog,
  ZeroPlanned,
  VoxelOutOfPlan,
  LengthMismatch,
  TooFewPairs,
  MisalignedInputs,
  UnknownCase,
  UnknownSession,
  ResourceExhausted,
  SessionClosed,
  MalformedMessage,
  InvalidArgument,
};

constexpr std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::UnknownVersion: return "UnknownVersion";
    case Errc::IoError: return "IoError";
    case Errc::EmptyStructure: return "EmptyStructure";
    case Errc::SpecMismatch: return "SpecMismatch";
    case Errc::EmptyList: return "EmptyList";
    case Errc::EmptyTarget: return "EmptyTarget";
    case Errc::NonFinitePose: return "NonFinitePose";
    case Errc::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
    case Errc::MalformedTrajectory: return "MalformedTrajectory";
    case Errc::UnorderedLog: return "UnorderedLog";
    case Errc::ZeroPlanned: return "ZeroPlanned";
    case Errc::VoxelOutOfPlan: return "VoxelOutOfPlan";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::TooFewPairs: return "TooFewPairs";
    case Errc::MisalignedInputs: return "MisalignedInputs";
    case Errc::UnknownCase: return "UnknownCase";
    case Errc::UnknownSession: return "UnknownSession";
    case Errc::ResourceExhausted: return "ResourceExhausted";
    case Errc::SessionClosed: return "SessionClosed";
    case Errc::MalformedMessage: return "MalformedMessage";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a kind.
/// what() starts with the kind name so callers can surface it verbatim.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(compose(code, detail)), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view name() const noexcept { return errc_name(code_); }

 private:
  static std::string compose(Errc code, const std::string& detail) {
    std::string s(errc_name(code));
    if (!detail.empty()) {
      s += ": ";
      s += detail;
    }
    return s;
  }

  Errc code_;
};

}  // namespace captain

#endif  // CAPTAIN_ERROR_HPP
