#pragma once

#include <memory>

#include <Eigen/Dense>

#include "doctrans/corpus.hpp"

namespace doctrans {

// Incremental decoder state for one hypothesis. step() appends a token to the
// decoder input and returns the log-probability row for the next position, so
// a decode loop is: feed BOS, then repeatedly pick a token and feed it back.
class DecoderHandle {
public:
    virtual ~DecoderHandle() = default;
    virtual Eigen::VectorXd step(TokenId token) = 0;
    virtual std::unique_ptr<DecoderHandle> clone() const = 0;
    virtual long length() const = 0;  // tokens consumed so far
};

// Frozen per-source decoding context (e.g. precomputed encoder memory).
// Handles from start() are independent; a session is safe to share read-only.
class DecodeSession {
public:
    virtual ~DecodeSession() = default;
    virtual std::unique_ptr<DecoderHandle> start() const = 0;
    virtual int vocab() const = 0;
    virtual long max_target_len() const = 0;  // hard cap on step() calls per handle
};

}  // namespace doctrans
