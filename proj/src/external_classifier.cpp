#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "bdt/blackbox.hpp"

namespace bdt {

namespace {

constexpr std::size_t kMaxLine = 64 * 1024 * 1024;

std::string truncate_payload(const std::string& s) {
    return s.size() <= 512 ? s : s.substr(0, 512) + "...";
}

}  // namespace

ExternalClassifier::ExternalClassifier(std::string command, ExternalClassifierOptions options)
    : command_(std::move(command)), options_(options) {
    std::lock_guard lock(mutex_);
    try {
        start();
    } catch (...) {
        stop();
        throw;
    }
}

ExternalClassifier::~ExternalClassifier() { stop(); }

void ExternalClassifier::start() {
    int toChild[2];
    int fromChild[2];
    if (pipe(toChild) != 0) {
        throw TransportError(std::string("pipe failed: ") + std::strerror(errno));
    }
    if (pipe(fromChild) != 0) {
        close(toChild[0]);
        close(toChild[1]);
        throw TransportError(std::string("pipe failed: ") + std::strerror(errno));
    }
    const pid_t pid = fork();
    if (pid < 0) {
        throw TransportError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        setpgid(0, 0);
        dup2(toChild[0], STDIN_FILENO);
        dup2(fromChild[1], STDOUT_FILENO);
        close(toChild[0]);
        close(toChild[1]);
        close(fromChild[0]);
        close(fromChild[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid);
    close(toChild[0]);
    close(fromChild[1]);
    pid_ = pid;
    toChild_ = toChild[1];
    fromChild_ = fromChild[0];
    fcntl(toChild_, F_SETFD, FD_CLOEXEC);
    fcntl(fromChild_, F_SETFD, FD_CLOEXEC);
    buffer_.clear();
    signal(SIGPIPE, SIG_IGN);

    const nlohmann::json reply = request({{"id", 0}, {"op", "num_classes"}}, 0);
    if (!reply.contains("num_classes") || !reply["num_classes"].is_number_unsigned()) {
        throw TransportError("handshake reply lacks num_classes", reply.dump());
    }
    numClasses_ = reply["num_classes"].get<std::uint32_t>();
    if (numClasses_ == 0) {
        throw TransportError("classifier reported zero classes", reply.dump());
    }
}

void ExternalClassifier::stop() {
    if (toChild_ >= 0) close(toChild_);
    if (fromChild_ >= 0) close(fromChild_);
    toChild_ = fromChild_ = -1;
    if (pid_ > 0) {
        int status = 0;
        if (waitpid(pid_, &status, WNOHANG) == 0) {
            // The command runs under sh -c, so take down its whole group.
            kill(-pid_, SIGKILL);
            waitpid(pid_, &status, 0);
        }
    }
    pid_ = -1;
}

void ExternalClassifier::send_line(const std::string& line) {
    std::string out = line + "\n";
    std::size_t written = 0;
    while (written < out.size()) {
        const ssize_t n = write(toChild_, out.data() + written, out.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("write to classifier failed: ") + std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }
}

std::string ExternalClassifier::read_line() {
    using Clock = std::chrono::steady_clock;
    const auto deadline = Clock::now() + options_.timeout;
    for (;;) {
        if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
            std::string line = buffer_.substr(0, pos);
            buffer_.erase(0, pos + 1);
            return line;
        }
        if (buffer_.size() > kMaxLine) {
            throw TransportError("classifier response line too long", truncate_payload(buffer_));
        }
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (remaining.count() <= 0) {
            throw TimeoutError("classifier did not answer within " + std::to_string(options_.timeout.count()) +
                                   " ms",
                               truncate_payload(buffer_));
        }
        pollfd pfd{fromChild_, POLLIN, 0};
        const int ready = poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (ready == 0) continue;
        char chunk[65536];
        const ssize_t n = read(fromChild_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("read from classifier failed: ") + std::strerror(errno));
        }
        if (n == 0) {
            throw TransportError("classifier process exited", truncate_payload(buffer_));
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

nlohmann::json ExternalClassifier::request(const nlohmann::json& message, std::uint64_t id) {
    send_line(message.dump());
    const std::string line = read_line();
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
        throw TransportError("malformed classifier response", truncate_payload(line));
    }
    if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_unsigned() ||
        reply["id"].get<std::uint64_t>() != id) {
        throw TransportError("classifier response id does not match request " + std::to_string(id),
                             truncate_payload(line));
    }
    return reply;
}

LabelId ExternalClassifier::classify(const ImageTensor& image) {
    std::lock_guard lock(mutex_);
    nlohmann::json message = {{"id", 0},
                              {"h", image.height()},
                              {"w", image.width()},
                              {"c", image.channels()},
                              {"data", std::vector<float>(image.data().begin(), image.data().end())}};
    for (int attempt = 0;; ++attempt) {
        const std::uint64_t id = nextId_++;
        message["id"] = id;
        try {
            if (pid_ < 0) {
                try {
                    start();
                } catch (...) {
                    stop();
                    throw;
                }
            }
            const nlohmann::json reply = request(message, id);
            if (!reply.contains("label") || !reply["label"].is_number_unsigned()) {
                throw TransportError("classifier response lacks a label", truncate_payload(reply.dump()));
            }
            const auto label = reply["label"].get<std::uint32_t>();
            if (label >= numClasses_) {
                throw TransportError("classifier label " + std::to_string(label) + " out of range",
                                     truncate_payload(reply.dump()));
            }
            return LabelId{label};
        } catch (const TimeoutError&) {
            // The pending reply would desynchronize the stream; restart the process.
            stop();
            if (attempt >= options_.retries) throw;
        }
    }
}

}  // namespace bdt
