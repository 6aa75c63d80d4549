#pragma once

#include <stdexcept>
#include <string>

namespace histmod {

// Every failure carries the module that raised it so the CLI can print
// "module: cause" without guessing.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

#define HISTMOD_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                      \
    public:                                                          \
        using Error::Error;                                          \
    };

HISTMOD_DEFINE_ERROR(InputError)
HISTMOD_DEFINE_ERROR(AlignmentError)
HISTMOD_DEFINE_ERROR(DecodeError)
HISTMOD_DEFINE_ERROR(SizeError)
HISTMOD_DEFINE_ERROR(TrainingError)
HISTMOD_DEFINE_ERROR(ValidationError)
HISTMOD_DEFINE_ERROR(NotFoundError)
HISTMOD_DEFINE_ERROR(ConflictError)
HISTMOD_DEFINE_ERROR(StageError)
HISTMOD_DEFINE_ERROR(TranslatorError)

#undef HISTMOD_DEFINE_ERROR

} // namespace histmod
