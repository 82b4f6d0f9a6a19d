// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_ERROR_H
#define MVG_ERROR_H

#include <stdexcept>
#include <string>

namespace mvg {

/// Base class for every failure raised by the evaluation engine.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input files (PLY, MVGF, manifests, pose lists).
class ParseError : public Error {
  public:
    using Error::Error;
};

/// Invalid configuration or plan content.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A pluggable perceptual or feature provider failed. Kept distinct from metric
/// values so that a broken provider never masquerades as a NaN score.
class ProviderError : public Error {
  public:
    using Error::Error;
};

/// Network or protocol failure talking to a VLM endpoint.
class TransportError : public Error {
  public:
    using Error::Error;
};

} // namespace mvg

#endif // MVG_ERROR_H
