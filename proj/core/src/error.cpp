#include "thermograph/error.hpp"

namespace thermograph {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kBounds: return "bounds";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kControl: return "control";
    case ErrorKind::kIntegration: return "integration";
    case ErrorKind::kLabel: return "label";
    case ErrorKind::kModelCorrupt: return "model-corrupt";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kUndefinedTau: return "undefined-tau";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kCheckpoint: return "checkpoint";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace thermograph
