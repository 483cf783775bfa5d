#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hmmt {

// Base class for every recoverable failure raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Score requested where the density is numerically zero.
class DensityUnderflow : public Error
{
public:
  DensityUnderflow(double x, double value)
    : Error("density underflow at x=" + std::to_string(x) +
            " (value " + std::to_string(value) + ")")
    , x_(x)
  {}
  double x() const { return x_; }

private:
  double x_;
};

// Both emission densities vanish at some observation.
class EmissionUnderflow : public Error
{
public:
  explicit EmissionUnderflow(std::size_t index)
    : Error("both emission densities are zero at position " +
            std::to_string(index))
    , index_(index)
  {}
  std::size_t index() const { return index_; }

private:
  std::size_t index_;
};

class InstanceTooLarge : public Error
{
public:
  using Error::Error;
};

class DegenerateInput : public Error
{
public:
  using Error::Error;
};

// All posterior mass sits in the in-control state; f1 cannot be re-estimated.
class WeightCollapse : public Error
{
public:
  using Error::Error;
};

class NoSignalPoints : public Error
{
public:
  using Error::Error;
};

// A mixture component lost its weight or its spread.
class ComponentCollapse : public Error
{
public:
  ComponentCollapse(std::size_t component, const std::string& why)
    : Error("mixture component " + std::to_string(component) + " collapsed: " + why)
    , component_(component)
  {}
  std::size_t component() const { return component_; }

private:
  std::size_t component_;
};

class LengthMismatch : public Error
{
public:
  LengthMismatch(std::size_t expected, std::size_t got)
    : Error("length mismatch: expected " + std::to_string(expected) + ", got " +
            std::to_string(got))
  {}
};

} // namespace hmmt
