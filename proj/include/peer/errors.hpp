#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace peer {

// Base of every error raised by the toolkit. `code()` is the stable,
// machine-readable name used in CLI and HTTP error payloads.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define PEER_DECLARE_ERROR(Name)                                    \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name, what) {}  \
  };

PEER_DECLARE_ERROR(InvalidArgument)
PEER_DECLARE_ERROR(ParseError)
PEER_DECLARE_ERROR(IoError)

// format
PEER_DECLARE_ERROR(DanglingCitation)
PEER_DECLARE_ERROR(InvalidMarker)
PEER_DECLARE_ERROR(OverTokenBudget)
PEER_DECLARE_ERROR(EmptyAfterMinimize)

// control
PEER_DECLARE_ERROR(InvalidControl)
PEER_DECLARE_ERROR(UnknownKey)

// corpus
PEER_DECLARE_ERROR(UnresolvedDoc)

// backend
PEER_DECLARE_ERROR(Timeout)
PEER_DECLARE_ERROR(ProtocolError)
PEER_DECLARE_ERROR(ConstraintUnsatisfiable)
PEER_DECLARE_ERROR(EmptyOutput)
PEER_DECLARE_ERROR(InvalidScript)

// engine / service
PEER_DECLARE_ERROR(NotFound)
PEER_DECLARE_ERROR(Halted)
PEER_DECLARE_ERROR(NoPending)
PEER_DECLARE_ERROR(IndexOutOfRange)
PEER_DECLARE_ERROR(CandidateRejected)
PEER_DECLARE_ERROR(NoViableCandidate)

// synth
PEER_DECLARE_ERROR(NoValidDocument)
PEER_DECLARE_ERROR(ScoringFailed)

// metrics
PEER_DECLARE_ERROR(EmptyDataset)
PEER_DECLARE_ERROR(IdMismatch)

#undef PEER_DECLARE_ERROR

}  // namespace peer
