// Vertical-drag fine knob for the third latent direction, range [-1, 1].

export type Knob = {
	setEnabled(on: boolean): void;
	getValue(): number;
	draw(): void;
};

export function createKnob(canvas: HTMLCanvasElement, onChange: (v: number) => void): Knob {
	const ctx = canvas.getContext('2d')!;
	let value = 0;
	let enabled = false;
	let dragging = false;
	let dragStartY = 0;
	let dragStartValue = 0;

	function draw(): void {
		const { width: w, height: h } = canvas;
		const cx = w / 2;
		const cy = h / 2;
		const r = Math.min(w, h) / 2 - 6;
		ctx.clearRect(0, 0, w, h);
		ctx.strokeStyle = '#2c2c38';
		ctx.lineWidth = 5;
		ctx.beginPath();
		ctx.arc(cx, cy, r, 0.75 * Math.PI, 2.25 * Math.PI);
		ctx.stroke();
		const angle = 0.75 * Math.PI + ((value + 1) / 2) * 1.5 * Math.PI;
		ctx.strokeStyle = enabled ? '#7ad0ff' : '#3a4a55';
		ctx.beginPath();
		ctx.moveTo(cx, cy);
		ctx.lineTo(cx + r * Math.cos(angle), cy + r * Math.sin(angle));
		ctx.stroke();
	}

	canvas.addEventListener('pointerdown', (ev) => {
		if (!enabled) return;
		dragging = true;
		canvas.setPointerCapture(ev.pointerId);
		dragStartY = ev.clientY;
		dragStartValue = value;
	});
	canvas.addEventListener('pointermove', (ev) => {
		if (!dragging || !enabled) return;
		const delta = (dragStartY - ev.clientY) / 120;
		value = Math.max(-1, Math.min(1, dragStartValue + delta));
		draw();
		onChange(value);
	});
	canvas.addEventListener('pointerup', () => {
		dragging = false;
	});

	draw();
	return {
		setEnabled(on: boolean) {
			enabled = on;
			draw();
		},
		getValue: () => value,
		draw
	};
}
