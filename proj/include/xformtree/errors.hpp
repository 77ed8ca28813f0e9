#pragma once

#include <stdexcept>
#include <string>

namespace xformtree {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- matrix algebra ---
class NotAffine : public Error { public: using Error::Error; };
class SingularMatrix : public Error { public: using Error::Error; };
class InvalidRotation : public Error { public: using Error::Error; };
class NotTrsFactorable : public Error { public: using Error::Error; };

// --- point sets ---
class SizeMismatch : public Error { public: using Error::Error; };
class EmptySet : public Error { public: using Error::Error; };

// --- tree / workspace ---
class UnknownParent : public Error { public: using Error::Error; };
class UnknownNode : public Error { public: using Error::Error; };
class UnknownCamera : public Error { public: using Error::Error; };
class DifferentModels : public Error { public: using Error::Error; };
class CycleWouldForm : public Error { public: using Error::Error; };
class NotSiblings : public Error { public: using Error::Error; };
class NoGeometry : public Error { public: using Error::Error; };

// --- registration ---
class DegenerateConfiguration : public Error { public: using Error::Error; };
class NoCorrespondences : public Error { public: using Error::Error; };
class InconsistentPoses : public Error { public: using Error::Error; };
class DegenerateAngles : public Error { public: using Error::Error; };
class RegistrationFailed : public Error { public: using Error::Error; };

// --- motion ---
class InsufficientFrames : public Error { public: using Error::Error; };
class InvalidTrack : public Error { public: using Error::Error; };
class BadTimesSpec : public Error { public: using Error::Error; };

// --- serialization / files ---

/// Text-level failure while reading an input file. Carries the 1-based
/// line/column where the problem was detected.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line, int column)
      : Error(message + " at line " + std::to_string(line) + ", column " +
              std::to_string(column)),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class SyntaxError : public ParseError { public: using ParseError::ParseError; };
class UnbalancedBraces : public ParseError { public: using ParseError::ParseError; };
class MalformedMatrix : public ParseError { public: using ParseError::ParseError; };
class MalformedString : public ParseError { public: using ParseError::ParseError; };

class MissingFile : public Error { public: using Error::Error; };
class MalformedTransform : public Error { public: using Error::Error; };
class UnexportableGeometry : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

// --- cli / selectors ---
class AmbiguousSelector : public Error { public: using Error::Error; };

/// Catch-all for violated call preconditions that have no dedicated type.
class InvalidArgument : public Error { public: using Error::Error; };

}  // namespace xformtree
