"""Compare taped gradients of the negative ELBO with central differences.

    python3 demos/gradient_check.py
"""

from momentbnn import Architecture, grad_check


def main():
    for mode in ("embedded", "split"):
        for width in (1, 4, 16):
            report = grad_check(Architecture((width,), head_mode=mode), seed=width)
            status = "ok" if report.passed else "FAILED"
            print(f"{mode:8s} H={width:<3d} {report.n_checked:4d} coords "
                  f"max rel err {report.max_rel_error:.2e} {status}")


if __name__ == "__main__":
    main()
