#pragma once

#include <stdexcept>
#include <string>

namespace qmcr {

enum class Errc {
  DimensionMismatch,
  SingularMatrix,
  NoConvergence,
  BranchCut,
  BadWeights,
  NoInvariantState,
  StateOutsideSubspace,
  StateOutsideOverlap,
  NotInvariant,
  NotIrreducible,
  NotUnitalOnEnclosure,
  InvalidPartition,
  LeftNotRecurrent,
  HypothesisViolated,
  SingularIterate,
  ResolventSingular,
  ParseError,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::SingularMatrix: return "SingularMatrix";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::BranchCut: return "BranchCut";
    case Errc::BadWeights: return "BadWeights";
    case Errc::NoInvariantState: return "NoInvariantState";
    case Errc::StateOutsideSubspace: return "StateOutsideSubspace";
    case Errc::StateOutsideOverlap: return "StateOutsideOverlap";
    case Errc::NotInvariant: return "NotInvariant";
    case Errc::NotIrreducible: return "NotIrreducible";
    case Errc::NotUnitalOnEnclosure: return "NotUnitalOnEnclosure";
    case Errc::InvalidPartition: return "InvalidPartition";
    case Errc::LeftNotRecurrent: return "LeftNotRecurrent";
    case Errc::HypothesisViolated: return "HypothesisViolated";
    case Errc::SingularIterate: return "SingularIterate";
    case Errc::ResolventSingular: return "ResolventSingular";
    case Errc::ParseError: return "ParseError";
  }
  return "Error";
}

}  // namespace qmcr
