// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// External denoiser wire protocol, one frame per call, little-endian:
//
//   request:  "UADN" | u32 version=1 | u32 t | u32 bins | u32 frames |
//             bins*frames pairs of f32 (re, im), frequency-major
//             (all frames of bin 0, then bin 1, ...)
//   response: "UADR" | u32 version=1 | u32 t | u32 bins | u32 frames |
//             payload in the same layout
//
// The child must echo t/bins/frames. Violations, short reads, timeouts
// (5 s per direction) and child death all raise DenoiserProtocolError.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <vector>

#include "uadps/diffusion.hpp"

namespace uadps {

namespace {

constexpr int kTimeoutMs = 5000;
constexpr std::uint32_t kVersion = 1;
constexpr char kReqMagic[4] = {'U', 'A', 'D', 'N'};
constexpr char kRespMagic[4] = {'U', 'A', 'D', 'R'};

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                        deadline - Clock::now())
                        .count();
  return left < 0 ? 0 : static_cast<int>(left);
}

void write_all(int fd, const void* buf, std::size_t n,
               Clock::time_point deadline) {
  const char* p = static_cast<const char*>(buf);
  while (n > 0) {
    struct pollfd pfd = {fd, POLLOUT, 0};
    const int pr = ::poll(&pfd, 1, remaining_ms(deadline));
    if (pr == 0) throw DenoiserProtocolError("timeout writing to denoiser");
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw DenoiserProtocolError("poll failed while writing to denoiser");
    }
    const ssize_t w = ::write(fd, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw DenoiserProtocolError("denoiser closed its input (write failed)");
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

void read_all(int fd, void* buf, std::size_t n, Clock::time_point deadline) {
  char* p = static_cast<char*>(buf);
  while (n > 0) {
    struct pollfd pfd = {fd, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, remaining_ms(deadline));
    if (pr == 0) throw DenoiserProtocolError("timeout reading from denoiser");
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw DenoiserProtocolError("poll failed while reading from denoiser");
    }
    const ssize_t r = ::read(fd, p, n);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw DenoiserProtocolError("read from denoiser failed");
    }
    if (r == 0)
      throw DenoiserProtocolError("denoiser closed its output mid-frame");
    p += r;
    n -= static_cast<std::size_t>(r);
  }
}

void put_u32(std::vector<char>* out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out->insert(out->end(), b, b + 4);
}

std::uint32_t get_u32(const char* p) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24);
}

}  // namespace

ExternalDenoiser::ExternalDenoiser(std::string command, const Schedule& sched)
    : Denoiser(sched), command_(std::move(command)) {
  if (command_.empty())
    throw InvalidInput("external denoiser: empty command");
  // Dead children must surface as protocol errors, not SIGPIPE.
  ::signal(SIGPIPE, SIG_IGN);
}

ExternalDenoiser::~ExternalDenoiser() { shutdown(); }

void ExternalDenoiser::spawn() {
  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0)
    throw DenoiserProtocolError("failed to create denoiser pipe");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw DenoiserProtocolError("failed to create denoiser pipe");
  }
  const int pid = ::fork();
  if (pid < 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]})
      ::close(fd);
    throw DenoiserProtocolError("failed to fork denoiser process");
  }
  if (pid == 0) {
    // own process group, so shutdown() can signal sh and any command it forks
    ::setpgid(0, 0);
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]})
      ::close(fd);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(),
            static_cast<char*>(nullptr));
    _exit(127);
  }
  ::setpgid(pid, pid);  // mirror in parent; loser of the race is a no-op
  ::close(to_child[0]);
  ::close(from_child[1]);
  pid_ = pid;
  to_child_ = to_child[1];
  from_child_ = from_child[0];
}

void ExternalDenoiser::shutdown() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    // group kill: sh may fork the command instead of exec'ing it
    if (::kill(-pid_, SIGTERM) != 0) ::kill(pid_, SIGTERM);
    int status = 0;
    bool reaped = false;
    for (int i = 0; i < 50; ++i) {  // up to ~0.5 s of grace
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        reaped = true;
        break;
      }
      ::usleep(10000);
    }
    if (::kill(-pid_, SIGKILL) != 0 && !reaped) ::kill(pid_, SIGKILL);
    if (!reaped) ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

Spectrogram ExternalDenoiser::estimate_noise(const Spectrogram& x_t, int t) {
  schedule().beta_at(t);  // range check
  if (pid_ < 0) spawn();

  const int F = x_t.bins();
  const int L = x_t.frames();
  const std::size_t n_vals = static_cast<std::size_t>(F) * L * 2;

  std::vector<char> header;
  header.reserve(20);
  header.insert(header.end(), kReqMagic, kReqMagic + 4);
  put_u32(&header, kVersion);
  put_u32(&header, static_cast<std::uint32_t>(t));
  put_u32(&header, static_cast<std::uint32_t>(F));
  put_u32(&header, static_cast<std::uint32_t>(L));

  std::vector<float> payload(n_vals);
  std::size_t idx = 0;
  for (int f = 0; f < F; ++f)
    for (int l = 0; l < L; ++l) {
      const cplx v = x_t.data(f, l);
      payload[idx++] = static_cast<float>(v.real());
      payload[idx++] = static_cast<float>(v.imag());
    }

  const auto deadline_w = Clock::now() + std::chrono::milliseconds(kTimeoutMs);
  write_all(to_child_, header.data(), header.size(), deadline_w);
  write_all(to_child_, payload.data(), payload.size() * sizeof(float),
            deadline_w);

  const auto deadline_r = Clock::now() + std::chrono::milliseconds(kTimeoutMs);
  char resp[20];
  read_all(from_child_, resp, sizeof(resp), deadline_r);
  if (std::memcmp(resp, kRespMagic, 4) != 0)
    throw DenoiserProtocolError("denoiser response has bad magic");
  if (get_u32(resp + 4) != kVersion)
    throw DenoiserProtocolError("denoiser response has unsupported version " +
                                std::to_string(get_u32(resp + 4)));
  if (get_u32(resp + 8) != static_cast<std::uint32_t>(t) ||
      get_u32(resp + 12) != static_cast<std::uint32_t>(F) ||
      get_u32(resp + 16) != static_cast<std::uint32_t>(L))
    throw DenoiserProtocolError(
        "denoiser response does not echo the request dimensions");

  std::vector<float> rpayload(n_vals);
  read_all(from_child_, rpayload.data(), rpayload.size() * sizeof(float),
           deadline_r);

  Spectrogram out = x_t;
  idx = 0;
  for (int f = 0; f < F; ++f)
    for (int l = 0; l < L; ++l) {
      const float re = rpayload[idx++];
      const float im = rpayload[idx++];
      out.data(f, l) = cplx(re, im);
    }
  if (!out.all_finite())
    throw DenoiserProtocolError("denoiser response contains non-finite values");
  return out;
}

}  // namespace uadps
