#include "prgbd/error.hpp"

namespace prgbd {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateDepth: return "DegenerateDepth";
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyView: return "EmptyView";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::InvalidTriple: return "InvalidTriple";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::InitializationFailure: return "InitializationFailure";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NoDescent: return "NoDescent";
    case ErrorKind::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorKind::AssociationError: return "AssociationError";
    case ErrorKind::IOError: return "IOError";
    case ErrorKind::LostTracking: return "LostTracking";
  }
  return "Unknown";
}

}  // namespace prgbd
