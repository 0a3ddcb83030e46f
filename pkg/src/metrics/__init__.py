"""
Метрики качества изображений PSNR/SSIM/LPIPS и отчеты по ним
"""
