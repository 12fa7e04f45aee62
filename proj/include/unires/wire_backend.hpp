// SPDX-License-Identifier: Apache-2.0
//
// Out-of-process backend client: line-delimited JSON requests/responses
// over a child process's standard streams. Requests carry
// {op, image, box?, label?, caption?}; responses carry {ok, payload|error}.

#pragma once

#include "unires/datagen_engine.hpp"

#include <nlohmann/json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <memory>
#include <string>

namespace unires {

class SubprocessBackend {
 public:
  explicit SubprocessBackend(const std::string& command) {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw backend_error("subprocess backend: pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw backend_error("subprocess backend: fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_ = fdopen(to_child[1], "w");
    out_ = fdopen(from_child[0], "r");
    if (!in_ || !out_) throw backend_error("subprocess backend: fdopen failed");
  }

  ~SubprocessBackend() {
    if (in_) fclose(in_);
    if (out_) fclose(out_);
    if (pid_ > 0) {
      int status;
      waitpid(pid_, &status, 0);
    }
  }

  SubprocessBackend(const SubprocessBackend&) = delete;
  SubprocessBackend& operator=(const SubprocessBackend&) = delete;

  nlohmann::json call(const nlohmann::json& request) {
    std::string line = request.dump();
    fputs(line.c_str(), in_);
    fputc('\n', in_);
    fflush(in_);
    char buf[1 << 16];
    if (!fgets(buf, sizeof(buf), out_))
      throw backend_error("subprocess backend: no response");
    nlohmann::json resp = nlohmann::json::parse(buf);
    if (!resp.value("ok", false))
      throw backend_error("subprocess backend: " + resp.value("error", "unknown error"));
    return resp.at("payload");
  }

 private:
  pid_t pid_ = -1;
  FILE* in_ = nullptr;
  FILE* out_ = nullptr;
};

namespace detail {

inline nlohmann::json box_json(const BoundingBox& b) {
  return nlohmann::json::array({b.x0, b.y0, b.x1, b.y1});
}

}  // namespace detail

// Wraps a subprocess speaking the wire contract into BackendClients.
// Images are referenced by id; the remote side is expected to resolve them.
inline BackendClients make_subprocess_backends(std::shared_ptr<SubprocessBackend> proc) {
  BackendClients c;
  c.captioner = [proc](const EngineImage& img, const BoundingBox& nb) {
    auto payload = proc->call({{"op", "caption"}, {"image", img.id},
                               {"box", detail::box_json(nb)}});
    return payload.get<std::string>();
  };
  c.segmenter = [proc](const EngineImage& img, const BoundingBox& box) {
    auto payload = proc->call({{"op", "segment"}, {"image", img.id},
                               {"box", detail::box_json(box)}});
    return rle_decode(rle_from_json(payload));
  };
  c.part_vocab = [proc](const std::string& label) {
    auto payload = proc->call({{"op", "part_vocab"}, {"label", label}});
    return payload.get<std::vector<std::string>>();
  };
  c.part_locator = [proc](const EngineImage& img, const BoundingBox& obox,
                          const std::string& part) -> std::optional<BoundingBox> {
    auto payload = proc->call({{"op", "locate_part"}, {"image", img.id},
                               {"box", detail::box_json(obox)}, {"label", part}});
    if (payload.is_null()) return std::nullopt;
    BoundingBox b;
    b.x0 = payload.at(0).get<double>();
    b.y0 = payload.at(1).get<double>();
    b.x1 = payload.at(2).get<double>();
    b.y1 = payload.at(3).get<double>();
    return b;
  };
  c.scorer = [proc](const EngineImage& img, const BoundingBox& box,
                    const std::string& caption) {
    auto payload = proc->call({{"op", "score"}, {"image", img.id},
                               {"box", detail::box_json(box)}, {"caption", caption}});
    return payload.get<double>();
  };
  return c;
}

}  // namespace unires
