#pragma once

// Minimal JSON emitter for run reports. Object keys are kept sorted
// (std::map) and doubles print with 17 significant digits so identical runs
// produce identical bytes.

#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace otreg {

class JsonValue {
 public:
  using Array = std::vector<JsonValue>;
  using Object = std::map<std::string, JsonValue>;

  JsonValue() : v_(nullptr) {}
  JsonValue(bool b) : v_(b) {}
  JsonValue(int i) : v_(static_cast<std::int64_t>(i)) {}
  JsonValue(long i) : v_(static_cast<std::int64_t>(i)) {}
  JsonValue(long long i) : v_(static_cast<std::int64_t>(i)) {}
  JsonValue(std::int64_t i) : v_(i) {}
  JsonValue(double d) : v_(d) {}
  JsonValue(const char* s) : v_(std::string(s)) {}
  JsonValue(std::string s) : v_(std::move(s)) {}
  JsonValue(Array a) : v_(std::move(a)) {}
  JsonValue(Object o) : v_(std::move(o)) {}

  std::string dump() const {
    std::string out;
    write(out);
    return out;
  }

 private:
  void write(std::string& out) const {
    switch (v_.index()) {
      case 0:
        out += "null";
        break;
      case 1:
        out += std::get<bool>(v_) ? "true" : "false";
        break;
      case 2: {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(std::get<std::int64_t>(v_)));
        out += buf;
        break;
      }
      case 3: {
        const double d = std::get<double>(v_);
        char buf[40];
        if (d != d || d == 1.0 / 0.0 || d == -1.0 / 0.0)
          std::snprintf(buf, sizeof(buf), "null");
        else
          std::snprintf(buf, sizeof(buf), "%.17g", d);
        out += buf;
        break;
      }
      case 4:
        escape(std::get<std::string>(v_), out);
        break;
      case 5: {
        out.push_back('[');
        const Array& a = std::get<Array>(v_);
        for (size_t i = 0; i < a.size(); ++i) {
          if (i) out.push_back(',');
          a[i].write(out);
        }
        out.push_back(']');
        break;
      }
      case 6: {
        out.push_back('{');
        const Object& o = std::get<Object>(v_);
        bool first = true;
        for (const auto& [k, val] : o) {
          if (!first) out.push_back(',');
          first = false;
          escape(k, out);
          out.push_back(':');
          val.write(out);
        }
        out.push_back('}');
        break;
      }
    }
  }

  static void escape(const std::string& s, std::string& out) {
    out.push_back('"');
    for (unsigned char c : s) {
      switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
          if (c < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "\\u%04x", c);
            out += buf;
          } else {
            out.push_back(static_cast<char>(c));
          }
      }
    }
    out.push_back('"');
  }

  std::variant<std::nullptr_t, bool, std::int64_t, double, std::string, Array, Object> v_;
};

}  // namespace otreg
