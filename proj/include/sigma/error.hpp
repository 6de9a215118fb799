// Copyright 2026 The Sigma Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sigma {

/// Every failure the machine and the reflection layer can report.
enum class Fault {
  // machine-core
  UnknownVariable,
  TypeError,
  StackUnderflow,
  NotAClosure,
  ResumeNonSuspended,
  EmptyCoroutine,
  YieldFromRoot,
  FuelExhausted,
  BadInstruction,
  // reflect-api
  ReifyAtomic,
  ReifyRunning,
  ShapeMismatch,
  UnresolvedHandle,
  InstallIntoRunning,
  BadLevel,
  BadTarget,
  NotInstallable,
  NameOfAtomic,
  UnknownTypeName,
  SetStatusRunning,
  SuspendedWithoutFrames,
  // host files
  HostOpenFailure,
  SeekBeyondEnd,
  BadPath,
};

inline std::string_view fault_name(Fault f) {
  switch (f) {
    case Fault::UnknownVariable: return "UnknownVariable";
    case Fault::TypeError: return "TypeError";
    case Fault::StackUnderflow: return "StackUnderflow";
    case Fault::NotAClosure: return "NotAClosure";
    case Fault::ResumeNonSuspended: return "ResumeNonSuspended";
    case Fault::EmptyCoroutine: return "EmptyCoroutine";
    case Fault::YieldFromRoot: return "YieldFromRoot";
    case Fault::FuelExhausted: return "FuelExhausted";
    case Fault::BadInstruction: return "BadInstruction";
    case Fault::ReifyAtomic: return "ReifyAtomic";
    case Fault::ReifyRunning: return "ReifyRunning";
    case Fault::ShapeMismatch: return "ShapeMismatch";
    case Fault::UnresolvedHandle: return "UnresolvedHandle";
    case Fault::InstallIntoRunning: return "InstallIntoRunning";
    case Fault::BadLevel: return "BadLevel";
    case Fault::BadTarget: return "BadTarget";
    case Fault::NotInstallable: return "NotInstallable";
    case Fault::NameOfAtomic: return "NameOfAtomic";
    case Fault::UnknownTypeName: return "UnknownTypeName";
    case Fault::SetStatusRunning: return "SetStatusRunning";
    case Fault::SuspendedWithoutFrames: return "SuspendedWithoutFrames";
    case Fault::HostOpenFailure: return "HostOpenFailure";
    case Fault::SeekBeyondEnd: return "SeekBeyondEnd";
    case Fault::BadPath: return "BadPath";
  }
  return "?";
}

/// Base of all library exceptions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A transition that could not be taken. `rule()` names the machine rule
/// (or API operation) that rejected the state.
class MachineError : public Error {
 public:
  MachineError(Fault fault, std::string rule, const std::string& detail)
      : Error(std::string(fault_name(fault)) + " in " + rule + ": " + detail),
        fault_(fault),
        rule_(std::move(rule)) {}

  Fault fault() const noexcept { return fault_; }
  const std::string& rule() const noexcept { return rule_; }

 private:
  Fault fault_;
  std::string rule_;
};

[[noreturn]] inline void fail(Fault fault, std::string rule,
                              const std::string& detail) {
  throw MachineError(fault, std::move(rule), detail);
}

}  // namespace sigma
