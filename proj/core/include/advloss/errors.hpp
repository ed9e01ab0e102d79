// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace advloss {

// Every error raised by the library derives from Error so callers can
// catch the whole family at once.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotInCatalog : public Error {
public:
    explicit NotInCatalog(const std::string& name)
        : Error("loss not in catalog: " + name) {}
};

class InvalidWeight : public Error {
public:
    using Error::Error;
};

class Unsupported : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Raised when a training quantity becomes non-finite. `step` is the
/// iteration at which it was detected (0 before the first update).
class FaultFlag : public Error {
public:
    FaultFlag(const std::string& what, long step)
        : Error(what + " at step " + std::to_string(step)), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

} // namespace advloss
