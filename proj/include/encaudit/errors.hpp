#pragma once

#include <stdexcept>
#include <string>

namespace encaudit {

// Every failure raised by the toolkit derives from Error and carries a
// category so the CLI can map it onto an exit code.
enum class ErrorCategory {
    Config,      // exit 2
    Data,        // exit 3
    Capability,  // exit 5
    Internal,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCategory category, const std::string& kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), category_(category), kind_(kind) {}

    ErrorCategory category() const noexcept { return category_; }
    const std::string& kind() const noexcept { return kind_; }

  private:
    ErrorCategory category_;
    std::string kind_;
};

#define ENCAUDIT_DEFINE_ERROR(Name, Category)                                   \
    class Name : public Error {                                                 \
      public:                                                                   \
        explicit Name(const std::string& what)                                  \
            : Error(ErrorCategory::Category, #Name, what) {}                    \
    };

ENCAUDIT_DEFINE_ERROR(InvalidInput, Data)
ENCAUDIT_DEFINE_ERROR(ShapeMismatch, Data)
ENCAUDIT_DEFINE_ERROR(DegenerateInput, Data)
ENCAUDIT_DEFINE_ERROR(TokenizationError, Data)
ENCAUDIT_DEFINE_ERROR(LengthError, Data)
ENCAUDIT_DEFINE_ERROR(IndexError, Data)
ENCAUDIT_DEFINE_ERROR(FormatError, Data)
ENCAUDIT_DEFINE_ERROR(ValidationError, Data)
ENCAUDIT_DEFINE_ERROR(SelectionError, Data)
ENCAUDIT_DEFINE_ERROR(DatasetError, Data)
ENCAUDIT_DEFINE_ERROR(ScorerError, Data)
ENCAUDIT_DEFINE_ERROR(ConfigError, Config)
ENCAUDIT_DEFINE_ERROR(CapabilityError, Capability)
ENCAUDIT_DEFINE_ERROR(InternalError, Internal)

#undef ENCAUDIT_DEFINE_ERROR

}  // namespace encaudit
