// Five-finger virtual hand: one dial per finger showing the joint angle
// (0-90 degrees) plus the live decoded label underneath.

import { FINGER_NAMES } from "./protocol.js";

export class HandView {
  private readonly dials: { arc: SVGPathElement; text: SVGTextElement }[] = [];

  constructor(private readonly root: HTMLElement) {
    for (let j = 0; j < 5; j++) {
      const cell = document.createElement("div");
      cell.className = "finger";
      cell.innerHTML = `
        <svg viewBox="0 0 80 56" width="80" height="56">
          <path d="M 8 48 A 32 32 0 0 1 72 48" fill="none"
                stroke="#2a3442" stroke-width="6" stroke-linecap="round"/>
          <path class="arc" d="" fill="none"
                stroke="#4fa3e3" stroke-width="6" stroke-linecap="round"/>
          <text class="val" x="40" y="46" text-anchor="middle"
                fill="#c7d0dc" font-size="12">0°</text>
        </svg>
        <div class="finger-name">${FINGER_NAMES[j]}</div>
        <div class="finger-label" data-finger="${j}">0.00</div>`;
      this.root.appendChild(cell);
      this.dials.push({
        arc: cell.querySelector(".arc") as SVGPathElement,
        text: cell.querySelector(".val") as SVGTextElement,
      });
    }
  }

  update(angles: number[], labels: number[]): void {
    for (let j = 0; j < 5; j++) {
      const frac = Math.min(Math.max(angles[j] / 90, 0), 1);
      // sweep the dial from 180 deg (open) toward 0 deg (fully flexed)
      const theta = Math.PI * (1 - frac);
      const xEnd = 40 + 32 * Math.cos(theta);
      const yEnd = 48 - 32 * Math.sin(theta);
      const large = frac > 0.5 ? 1 : 0;
      this.dials[j].arc.setAttribute(
        "d",
        frac <= 0 ? "" : `M 8 48 A 32 32 0 ${large} 1 ${xEnd} ${yEnd}`,
      );
      this.dials[j].text.textContent = `${angles[j].toFixed(0)}°`;
      const labelDiv = this.root.querySelector(
        `.finger-label[data-finger="${j}"]`,
      ) as HTMLElement;
      labelDiv.textContent = labels[j].toFixed(2);
    }
  }
}
