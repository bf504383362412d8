// Canvas XY pad: drag to set the two most influential latent directions.
// Positions are normalized to [-1, 1] on both axes; the store's range
// multiplier scales them before they reach the wire.

export type XyPad = {
	setEnabled(on: boolean): void;
	getPosition(): { x: number; y: number };
	draw(): void;
};

export function createXyPad(
	canvas: HTMLCanvasElement,
	onChange: (x: number, y: number) => void
): XyPad {
	const ctx = canvas.getContext('2d')!;
	let pos = { x: 0, y: 0 };
	let dragging = false;
	let enabled = false;

	function draw(): void {
		const { width: w, height: h } = canvas;
		ctx.clearRect(0, 0, w, h);
		ctx.fillStyle = enabled ? '#15151d' : '#0d0d11';
		ctx.fillRect(0, 0, w, h);
		ctx.strokeStyle = '#2c2c38';
		ctx.lineWidth = 1;
		for (let i = 1; i < 4; i++) {
			ctx.beginPath();
			ctx.moveTo((w * i) / 4, 0);
			ctx.lineTo((w * i) / 4, h);
			ctx.stroke();
			ctx.beginPath();
			ctx.moveTo(0, (h * i) / 4);
			ctx.lineTo(w, (h * i) / 4);
			ctx.stroke();
		}
		const kx = ((pos.x + 1) / 2) * w;
		const ky = ((1 - pos.y) / 2) * h;
		ctx.fillStyle = enabled ? '#7ad0ff' : '#3a4a55';
		ctx.beginPath();
		ctx.arc(kx, ky, 9, 0, Math.PI * 2);
		ctx.fill();
	}

	function fromEvent(ev: PointerEvent): { x: number; y: number } {
		const rect = canvas.getBoundingClientRect();
		const x = ((ev.clientX - rect.left) / rect.width) * 2 - 1;
		const y = (1 - (ev.clientY - rect.top) / rect.height) * 2 - 1;
		return {
			x: Math.max(-1, Math.min(1, x)),
			y: Math.max(-1, Math.min(1, y))
		};
	}

	canvas.addEventListener('pointerdown', (ev) => {
		if (!enabled) return;
		dragging = true;
		canvas.setPointerCapture(ev.pointerId);
		pos = fromEvent(ev);
		draw();
		onChange(pos.x, pos.y);
	});
	canvas.addEventListener('pointermove', (ev) => {
		if (!dragging || !enabled) return;
		pos = fromEvent(ev);
		draw();
		onChange(pos.x, pos.y);
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
		getPosition: () => ({ ...pos }),
		draw
	};
}
