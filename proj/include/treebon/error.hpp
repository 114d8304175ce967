// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace treebon {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid hyper-parameters or mismatched components. Never retried.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Corrupt node store (unknown ids, cyclic parent links).
class IntegrityError : public Error {
public:
    using Error::Error;
};

// A backend is missing a capability the engine depends on (found at probe time).
class CapabilityError : public Error {
public:
    using Error::Error;
};

// Transport failure talking to a remote backend; `attempts` is how many tries were made.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int attempts)
        : Error(what + " (after " + std::to_string(attempts) + " attempt(s))"), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

}  // namespace treebon
