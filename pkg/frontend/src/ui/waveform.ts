// Waveform visualizer with draggable trim handles. The trim region is a
// half-open sample range rendered as the lit area between two handles.

import { clampRegion, type TrimRegion } from '../trim.js';

export type WaveformView = {
	setWaveform(samples: number[] | null): void;
	setTrim(region: TrimRegion): void;
	draw(): void;
};

export function createWaveformView(
	canvas: HTMLCanvasElement,
	onTrimChange: (region: TrimRegion) => void
): WaveformView {
	const ctx = canvas.getContext('2d')!;
	let samples: number[] | null = null;
	let trim: TrimRegion = { start: 0, end: 0 };
	let dragging: 'start' | 'end' | null = null;

	function xToSample(x: number): number {
		if (!samples) return 0;
		const rect = canvas.getBoundingClientRect();
		return Math.round(((x - rect.left) / rect.width) * samples.length);
	}

	function sampleToX(i: number): number {
		if (!samples) return 0;
		return (i / samples.length) * canvas.width;
	}

	function draw(): void {
		const { width: w, height: h } = canvas;
		ctx.clearRect(0, 0, w, h);
		ctx.fillStyle = '#0d0d11';
		ctx.fillRect(0, 0, w, h);
		if (!samples || samples.length === 0) {
			ctx.fillStyle = '#3a4a55';
			ctx.font = '13px sans-serif';
			ctx.fillText('no waveform yet', 12, h / 2);
			return;
		}
		const xs = sampleToX(trim.start);
		const xe = sampleToX(trim.end);
		ctx.fillStyle = '#18202a';
		ctx.fillRect(xs, 0, xe - xs, h);
		ctx.strokeStyle = '#7ad0ff';
		ctx.lineWidth = 1;
		ctx.beginPath();
		const step = Math.max(1, Math.floor(samples.length / w));
		for (let px = 0; px < w; px++) {
			const i = Math.floor((px / w) * samples.length);
			let lo = 1.0;
			let hi = -1.0;
			for (let j = i; j < Math.min(i + step, samples.length); j++) {
				lo = Math.min(lo, samples[j]);
				hi = Math.max(hi, samples[j]);
			}
			ctx.moveTo(px, ((1 - hi) / 2) * h);
			ctx.lineTo(px, ((1 - lo) / 2) * h + 1);
		}
		ctx.stroke();
		for (const x of [xs, xe]) {
			ctx.strokeStyle = '#e8b84a';
			ctx.lineWidth = 2;
			ctx.beginPath();
			ctx.moveTo(x, 0);
			ctx.lineTo(x, h);
			ctx.stroke();
		}
	}

	canvas.addEventListener('pointerdown', (ev) => {
		if (!samples) return;
		const s = xToSample(ev.clientX);
		const dStart = Math.abs(s - trim.start);
		const dEnd = Math.abs(s - trim.end);
		dragging = dStart <= dEnd ? 'start' : 'end';
		canvas.setPointerCapture(ev.pointerId);
	});
	canvas.addEventListener('pointermove', (ev) => {
		if (!dragging || !samples) return;
		const s = xToSample(ev.clientX);
		const next = dragging === 'start' ? { ...trim, start: s } : { ...trim, end: s };
		trim = clampRegion(next, samples.length);
		draw();
		onTrimChange(trim);
	});
	canvas.addEventListener('pointerup', () => {
		dragging = null;
	});

	draw();
	return {
		setWaveform(next) {
			samples = next;
			draw();
		},
		setTrim(region) {
			trim = region;
			draw();
		},
		draw
	};
}
