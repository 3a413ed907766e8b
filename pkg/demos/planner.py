"""How switching bandwidth falls as the addressed array grows, for air and water cooling."""

from nvencode.analysis import planner_sweep


def main():
    lengths = [1000, 1200, 1600, 2000, 2400]
    for mode in ("air", "water"):
        print(f"{mode} cooling")
        for rep in planner_sweep(lengths, 100.0, cooling_mode=mode):
            flag = "ok" if rep.feasible else "infeasible"
            print(f"  DR {rep.DR:4.0f}  BW {rep.BW:6.3f} MHz  current {rep.used_current:6.0f} mA  "
                  f"rise {rep.thermal_rise:5.1f} K  {flag}")


if __name__ == "__main__":
    main()
