from typing import Optional, Sequence


class CCDistError(ValueError):
    """Base class for every error raised by ccdist."""


class NotSkewSymmetric(CCDistError):
    def __init__(self, index: int) -> None:
        self.index = index
        super().__init__(f"Matrix {index} is not skew-symmetric")


class LinearlyDependent(CCDistError):
    def __init__(self) -> None:
        super().__init__("The matrices U(1), ..., U(m) are linearly dependent")


class DimensionMismatch(CCDistError):
    def __init__(self, message: str = "Dimensions do not match the group") -> None:
        super().__init__(message)


class NonPositiveScale(CCDistError):
    def __init__(self, r: float) -> None:
        self.r = r
        super().__init__(f"Dilation factor must be positive, got {r}")


class UnknownFixture(CCDistError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(
            f"Unknown group fixture '{name}'. Known fixtures: heisenberg(n), "
            "htype(q,m), corank1(q), n32, kolmogorov(q)"
        )


class EigenFailure(CCDistError):
    def __init__(self) -> None:
        super().__init__("Symmetric eigensolver did not converge")


class DomainViolation(CCDistError):
    def __init__(self, index: int, message: Optional[str] = None) -> None:
        self.index = index
        super().__init__(
            message or f"Eigenvalue {index} lies outside the kernel domain"
        )


class UnsupportedOrder(CCDistError):
    def __init__(self, k: int, k_max: int) -> None:
        self.k = k
        super().__init__(f"Bessel order k={k} exceeds k_max={k_max}")


class ConvergenceFailure(CCDistError):
    def __init__(self, message: str = "Iteration did not converge") -> None:
        super().__init__(message)


class MaxIter(CCDistError):
    def __init__(self, max_iter: int) -> None:
        self.max_iter = max_iter
        super().__init__(f"Maximum number of iterations ({max_iter}) reached")


class NumericalBreakdown(CCDistError):
    def __init__(self, message: str = "Numerical breakdown in the solver") -> None:
        super().__init__(message)


class SingularTheta(CCDistError):
    def __init__(self) -> None:
        super().__init__("theta is singular: some eigenvalue of U(theta) is k*pi")


class NoneFound(CCDistError):
    def __init__(self, message: str = "No solution found") -> None:
        super().__init__(message)


class Unconverged(CCDistError):
    def __init__(self, message: str = "Quadrature did not converge") -> None:
        super().__init__(message)


class UnsupportedDimension(CCDistError):
    def __init__(self, m: int, limit: int = 3) -> None:
        self.m = m
        super().__init__(f"Vertical dimension m={m} exceeds the supported {limit}")


class NotInM(CCDistError):
    def __init__(self) -> None:
        super().__init__(
            "No interior nondegenerate maximizer: the point is not in M at this level"
        )


class SpecParseError(CCDistError):
    def __init__(
        self,
        message: str,
        index: Optional[int] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ) -> None:
        self.index = index
        self.line = line
        self.column = column
        super().__init__(message)


class NearBoundary(RuntimeWarning):
    """Evaluation point sits within 1e-8 (relative) of the kernel's pole."""


class UnknownSuite(CCDistError):
    def __init__(self, name: str, known: Sequence[str]) -> None:
        self.name = name
        super().__init__(f"Unknown suite '{name}'. Known suites: {', '.join(known)}")
