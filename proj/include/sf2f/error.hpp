#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sf2f {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or extent disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Malformed file (checkpoint, NIfTI, RVOL). `section()` names the part of the
// layout that failed to parse.
class FormatError : public Error {
public:
    FormatError(std::string section, const std::string& what)
        : Error(section + ": " + what), section_(std::move(section)) {}

    const std::string& section() const noexcept { return section_; }

private:
    std::string section_;
};

// Bad dataset content: manifests, label values, counts, spans.
class DataError : public Error {
public:
    using Error::Error;
};

// NaN/Inf during forward or training. `step()` is the optimizer step index
// when raised from the trainer, otherwise npos.
class NumericalError : public Error {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    explicit NumericalError(const std::string& what, std::size_t step = npos)
        : Error(what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace sf2f
