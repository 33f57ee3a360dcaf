#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stella {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class SlateTooLarge : public Error { using Error::Error; };
class MissingTruth : public Error { using Error::Error; };
class SchemeOverflow : public Error { using Error::Error; };
class DimensionMismatch : public Error { using Error::Error; };
class InsufficientHistory : public Error { using Error::Error; };
class PoolTooSmall : public Error { using Error::Error; };
class EmptyObservations : public Error { using Error::Error; };
class DegenerateLikelihood : public Error { using Error::Error; };
class BackendExhausted : public Error { using Error::Error; };
class LengthMismatch : public Error { using Error::Error; };
class EmptyInput : public Error { using Error::Error; };
class FileNotFound : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class TooManyMalformed : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class TransportError : public Error { using Error::Error; };
class RateLimited : public Error { using Error::Error; };

// Decode failures keep the offending model output for logging.
class DecodeError : public Error {
public:
    DecodeError(const std::string& msg, std::string raw)
        : Error(msg), raw_text(std::move(raw)) {}
    std::string raw_text;
};

class MalformedOutput : public DecodeError { using DecodeError::DecodeError; };
class UnknownLabel : public DecodeError { using DecodeError::DecodeError; };
class DuplicateLabel : public DecodeError { using DecodeError::DecodeError; };
class WrongLength : public DecodeError { using DecodeError::DecodeError; };

class InvalidAnswer : public Error {
public:
    InvalidAnswer(const std::string& msg, std::vector<std::string> raws)
        : Error(msg), raw_texts(std::move(raws)) {}
    std::vector<std::string> raw_texts;
};

}  // namespace stella
