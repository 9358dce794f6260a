#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fiid {

// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotConnected : public Error {
public:
    using Error::Error;
};

class RefuseTooLarge : public Error {
public:
    using Error::Error;
};

class NotIncluded : public Error {
public:
    NotIncluded(int level, int vertex)
        : Error("vertex " + std::to_string(vertex) + " is not included at level " +
                std::to_string(level)),
          level(level), vertex(vertex) {}
    int level;
    int vertex;
};

class BudgetExceeded : public Error {
public:
    BudgetExceeded(int vertex, std::uint64_t requested, std::uint64_t cap)
        : Error("bit budget exceeded at vertex " + std::to_string(vertex) + ": " +
                std::to_string(requested) + " > " + std::to_string(cap)),
          vertex(vertex), requested(requested), cap(cap) {}
    int vertex;
    std::uint64_t requested;
    std::uint64_t cap;
};

class ZeroMassCondition : public Error {
public:
    using Error::Error;
};

class Infeasible : public Error {
public:
    using Error::Error;
};

class SupportCapViolated : public Error {
public:
    using Error::Error;
};

// Raised when a monotone coupling does not exist.  `witness` lists the
// minimal generators of an up-set A with upper(A) < lower(A), as bit masks
// over the ground set of the tables involved.
class DominationFails : public Error {
public:
    DominationFails(std::string what, std::vector<std::uint64_t> witness, double upper_mass,
                    double lower_mass)
        : Error(std::move(what)), witness(std::move(witness)), upper_mass(upper_mass),
          lower_mass(lower_mass) {}
    std::vector<std::uint64_t> witness;
    double upper_mass;
    double lower_mass;
};

class ConfigError : public Error {
public:
    ConfigError(int line, const std::string& msg)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line(line) {}
    int line;
};

}  // namespace fiid
