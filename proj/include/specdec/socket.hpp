#pragma once

#include <string>

#include "specdec/session.hpp"

namespace specdec {

// TCP transport. Frames are the wire encoding; each peer sleeps for its
// direction's analytic transmission time before writing, so wall-clock pacing
// follows the configured link. The device drives rounds and closes the
// connection when the session is complete; the edge serves until EOF.
//
// A Hello exchange precedes round 0: both sides must agree on mode, gamma,
// vocabulary, b_prob, seed, sampling, stop condition and prompt hash, else the
// handshake fails with DesyncError.

// Opens a listening socket on 127.0.0.1:port (0 = ephemeral). Returns the fd;
// stores the bound port.
int socket_listen(std::uint16_t port, std::uint16_t* bound_port);

// Serves n_sessions device connections sequentially, then closes the listener.
void serve_edge_socket(const SessionConfig& cfg, const LanguageModel& mp, int listen_fd,
                       int n_sessions);

// Connects (with retries) and runs the device side of one session.
SessionTranscript run_device_socket(const SessionConfig& cfg, const LanguageModel& mq,
                                    const std::string& host, std::uint16_t port);

// In-process pair: edge thread on an ephemeral loopback port, device inline.
SessionTranscript run_session_socket_loopback(const SessionConfig& cfg, const LanguageModel& mq,
                                              const LanguageModel& mp);

}  // namespace specdec
