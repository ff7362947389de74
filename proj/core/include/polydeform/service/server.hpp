#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "polydeform/service/session.hpp"

namespace polydeform::service {

/// REST facade over a SessionStore.
///
///   GET    /healthz
///   POST   /sessions                      {image_png, masks?, boxes?, document?}
///   GET    /sessions/{id}
///   GET    /sessions/{id}/image           PNG bytes
///   GET    /sessions/{id}/events          JSON array of the event log
///   POST   /sessions/{id}/instances       {box, label} or {mask_png, label}
///   POST   /sessions/{id}/instances/{iid}/deform    {mode?}
///   PATCH  /sessions/{id}/instances/{iid}/vertices  {edits: [...]}
///   GET    /sessions/{id}/export          ?masks=1 adds base64 mask PNGs
///
/// PNG payloads travel base64-encoded inside JSON. Errors come back as
/// {"error": message} with 400 (malformed), 404 (unknown id), 422 (polygon
/// invariant) or 503 (no model). Static files under `static_dir` are served
/// at /.
class Server {
 public:
  Server(SessionStore& store, std::filesystem::path static_dir = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool listen_after_bind();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace polydeform::service
