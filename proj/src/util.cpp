#include "prov/util.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <random>

#include "prov/errors.hpp"

namespace prov {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::CompositeCycle: return "CompositeCycle";
    case ErrorKind::ImmutableOverwrite: return "ImmutableOverwrite";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::UnknownItem: return "UnknownItem";
    case ErrorKind::UnknownVersion: return "UnknownVersion";
    case ErrorKind::UnknownExecution: return "UnknownExecution";
    case ErrorKind::UnknownNode: return "UnknownNode";
    case ErrorKind::UnknownArtifact: return "UnknownArtifact";
    case ErrorKind::IllegalTransition: return "IllegalTransition";
    case ErrorKind::MissingOutcome: return "MissingOutcome";
    case ErrorKind::AlreadyFinished: return "AlreadyFinished";
    case ErrorKind::StatusMismatch: return "StatusMismatch";
    case ErrorKind::MissingInput: return "MissingInput";
    case ErrorKind::UnresolvableInputs: return "UnresolvableInputs";
    case ErrorKind::EmptyExecution: return "EmptyExecution";
    case ErrorKind::ExecutionOpen: return "ExecutionOpen";
    case ErrorKind::InvalidGraph: return "InvalidGraph";
    case ErrorKind::MalformedXml: return "MalformedXml";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::MalformedInput: return "MalformedInput";
    case ErrorKind::ExecutorRejected: return "ExecutorRejected";
    case ErrorKind::AddressInUse: return "AddressInUse";
    case ErrorKind::Internal: return "Internal";
  }
  return "Internal";
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.resize(static_cast<size_t>(len) * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[md[i] >> 4];
    out[2 * i + 1] = hex[md[i] & 0xF];
  }
  return out;
}

namespace {
const char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 3 <= bytes.size()) {
    unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                 (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                 static_cast<unsigned char>(bytes[i + 2]);
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += kB64Alphabet[(v >> 6) & 63];
    out += kB64Alphabet[v & 63];
    i += 3;
  }
  size_t rest = bytes.size() - i;
  if (rest == 1) {
    unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                 (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += kB64Alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw Error(ErrorKind::MalformedInput, "base64 length not a multiple of 4");
  }
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      char c = text[i + k];
      if (c == '=') {
        // '=' is only legal in the final one or two positions.
        if (i + 4 != text.size() || k < 2) {
          throw Error(ErrorKind::MalformedInput, "unexpected base64 padding");
        }
        vals[k] = 0;
        ++pad;
      } else {
        if (pad > 0) {
          throw Error(ErrorKind::MalformedInput, "data after base64 padding");
        }
        vals[k] = b64_value(c);
        if (vals[k] < 0) {
          throw Error(ErrorKind::MalformedInput, "invalid base64 character");
        }
      }
    }
    unsigned v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    out += static_cast<char>((v >> 16) & 0xFF);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xFF);
    if (pad < 1) out += static_cast<char>(v & 0xFF);
  }
  return out;
}

std::string new_item_id() {
  static std::mutex mu;
  static std::mt19937_64 eng = [] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd(),
                      static_cast<unsigned>(
                          std::chrono::steady_clock::now().time_since_epoch().count())};
    return std::mt19937_64(seq);
  }();
  std::array<std::uint8_t, 16> raw{};
  {
    std::lock_guard<std::mutex> lock(mu);
    for (size_t i = 0; i < raw.size(); i += 8) {
      std::uint64_t word = eng();
      for (size_t k = 0; k < 8; ++k) raw[i + k] = static_cast<std::uint8_t>(word >> (8 * k));
    }
  }
  // RFC 4122 variant/version bits so the rendering is a well-formed UUID.
  raw[6] = static_cast<std::uint8_t>((raw[6] & 0x0F) | 0x40);
  raw[8] = static_cast<std::uint8_t>((raw[8] & 0x3F) | 0x80);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(36);
  for (size_t i = 0; i < raw.size(); ++i) {
    if (i == 4 || i == 6 || i == 8 || i == 10) out += '-';
    out += hex[raw[i] >> 4];
    out += hex[raw[i] & 0xF];
  }
  return out;
}

std::int64_t now_millis() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string format_utc_millis(std::int64_t millis) {
  std::time_t secs = static_cast<std::time_t>(millis / 1000);
  int ms = static_cast<int>(millis % 1000);
  if (ms < 0) {
    ms += 1000;
    secs -= 1;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, ms);
  return buf;
}

}  // namespace prov
